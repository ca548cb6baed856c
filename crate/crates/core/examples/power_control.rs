//! Power control for one round: PFELS against WFL-P and WFL-PDP, with the
//! closed form checked against a brute-force search.
//!
//! Usage: `cargo run --release --example power_control -- [epsilon]`

use pfels::channel::{draw_channel, ChannelParams};
use pfels::numerics::RngStream;
use pfels::orchestrator::power_budget;
use pfels::power::{beta_pfels, beta_wflp, beta_wflpdp, p2_bruteforce_oracle, PowerInputs, RoundConstraints};
use pfels::privacy::pfels_c2;
use rand::Rng;

fn main() -> pfels::Result<()> {
    let epsilon: f64 = std::env::args().nth(1).map(|a| a.parse().expect("epsilon")).unwrap_or(0.05);
    let (d, k, lr, steps, c1, cohort, population) = (1000, 100, 0.05, 5, 1.0, 10, 100);
    let stream = RngStream::new(3);
    let devices: Vec<usize> = (0..cohort).collect();
    let channel = draw_channel(&devices, &ChannelParams::default(), &stream.child(0))?;
    let mut rng = stream.child(1).rng();
    let budgets: Vec<f64> = (0..cohort).map(|_| power_budget(d, rng.random_range(2.0..15.0), 1.0)).collect();
    let c2 = pfels_c2(lr, steps, c1, cohort, population, 1.0 / population as f64, 1.0)?;

    let inputs = |k| PowerInputs { gains: &channel.gains, budgets: &budgets, d, k, learning_rate: lr, steps, clip_gradient: c1 };
    let pf = beta_pfels(&inputs(k), epsilon, c2)?;
    let pdp = beta_wflpdp(&inputs(d), epsilon, c2)?;
    let wp = beta_wflp(&inputs(d))?;

    println!("gains: {:?}", channel.gains.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>());
    println!("epsilon {epsilon}, C2 {c2:.4}, privacy cap {:.4}", epsilon / c2);
    for (name, dec, kept) in [("pfels", &pf, k), ("wfl_pdp", &pdp, d), ("wfl_p", &wp, d)] {
        // expected energy per round: Σ α_i² (k/d) ‖Δ‖² with ‖Δ‖ at its bound
        let energy: f64 = dec.alphas.iter().map(|a| a * a * kept as f64 / d as f64 * (lr * steps as f64 * c1).powi(2)).sum();
        println!("{name:>8}: beta {:.4} ({}), worst-case energy {:.4e}, symbols {kept}", dec.beta, dec.regime.as_str(), energy);
    }

    let round = RoundConstraints {
        gains: channel.gains.clone(),
        budgets,
        d,
        k,
        learning_rate: lr,
        steps,
        clip_gradient: c1,
        epsilon,
        c2,
    };
    let grid = p2_bruteforce_oracle(std::slice::from_ref(&round), 1e-4)?;
    println!("brute-force beta {:.4} vs closed form {:.4}", grid[0], pf.beta);
    Ok(())
}
