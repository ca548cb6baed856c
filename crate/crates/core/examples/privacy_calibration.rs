//! Per-round privacy arithmetic: the feasibility constant C₂, the β cap it
//! implies, and the Gaussian-mechanism noise that cap corresponds to.
//!
//! Usage: `cargo run --release --example privacy_calibration`

use pfels::privacy::{
    amplify_by_subsampling, basic_composition, gaussian_sigma, pfels_c2, privacy_cap, sensitivity_bound,
    SensitivityContext,
};

fn main() -> pfels::Result<()> {
    let (lr, steps, c1) = (0.05, 5, 1.0);
    let (cohort, population) = (10, 100);
    let delta = 1.0 / population as f64;
    let noise_std = 1.0;
    let q = cohort as f64 / population as f64;

    let c2 = pfels_c2(lr, steps, c1, cohort, population, delta, noise_std)?;
    println!("C2 = {c2:.6}, receiver noise sigma0 = {noise_std}");
    println!(
        "{:>8} {:>10} {:>12} {:>14} {:>14}",
        "epsilon", "beta cap", "sensitivity", "sigma needed", "amplified eps"
    );
    for eps in [0.05, 0.1, 0.2, 0.5, 1.0] {
        let beta = privacy_cap(eps, c2);
        let psi = sensitivity_bound(&SensitivityContext { learning_rate: lr, steps, clip_gradient: c1, beta });
        // cohort-level budget (ε/q, δ/q) on the superposed signal, doubled sensitivity
        let need = gaussian_sigma(2.0 * psi, eps / q, delta / q)?;
        let (eps_amp, _) = amplify_by_subsampling(eps / q, delta / q, cohort, population)?;
        println!("{:>8} {:>10.4} {:>12.4e} {:>14.6} {:>14.4}", eps, beta, psi, need.sigma, eps_amp);
    }
    let (e, d) = basic_composition(0.1, delta, 100);
    println!("100 rounds at 0.1 per round compose to at most ({e}, {d})");
    Ok(())
}
