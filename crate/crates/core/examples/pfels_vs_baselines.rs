//! Compares PFELS with the wireless baselines on the non-IID logistic task
//! used by the directional acceptance checks.
//!
//! Usage: `cargo run --release --example pfels_vs_baselines -- [epsilon ...]`

use pfels::orchestrator::{run_experiment, Algorithm};
use pfels::validation::{directional_config, DIRECTIONAL_EPSILON};

fn main() -> pfels::Result<()> {
    let eps: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("epsilon must be a number"))
        .collect();
    let eps = if eps.is_empty() { vec![0.4, DIRECTIONAL_EPSILON, 4.0] } else { eps };
    println!("{:>8} {:>9} {:>5} {:>10} {:>12} {:>8}", "epsilon", "algorithm", "seed", "test", "energy", "subcarr");
    for &e in &eps {
        for seed in 0..3 {
            for algo in [Algorithm::Pfels, Algorithm::WflPdp, Algorithm::WflP] {
                let records = run_experiment(&directional_config(algo, e, seed))?;
                let last = records.last().expect("at least one round");
                println!(
                    "{:>8} {:>9} {:>5} {:>10.4} {:>12.4e} {:>8}",
                    e,
                    algo,
                    seed,
                    last.test_metric.unwrap_or(f64::NAN),
                    last.energy_cum,
                    last.subcarriers_cum
                );
            }
        }
    }
    Ok(())
}
