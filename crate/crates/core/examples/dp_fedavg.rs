//! Wired baselines: FedAvg against DP-FedAvg over a range of noise multipliers.
//!
//! Usage: `cargo run --release --example dp_fedavg -- [noise_multiplier ...]`

use pfels::orchestrator::{run_experiment, Algorithm, ExperimentConfig};

fn config(algorithm: Algorithm, sigma: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(algorithm);
    cfg.rounds = 100;
    cfg.eval_every = 25;
    cfg.dp_fedavg.noise_multiplier = sigma;
    cfg
}

fn main() -> pfels::Result<()> {
    let sigmas: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("noise multiplier must be a number"))
        .collect();
    let sigmas = if sigmas.is_empty() { vec![0.5, 1.0, 2.0, 4.0] } else { sigmas };

    let report = |label: String, cfg: &ExperimentConfig| -> pfels::Result<()> {
        let records = run_experiment(cfg)?;
        let evals: Vec<String> = records
            .iter()
            .filter_map(|r| r.test_metric.map(|m| format!("{m:.3}")))
            .collect();
        println!("{label:>18}: test accuracy {}", evals.join(" "));
        Ok(())
    };
    report("fedavg".into(), &config(Algorithm::Fedavg, 0.0))?;
    for s in sigmas {
        report(format!("dp_fedavg sigma={s}"), &config(Algorithm::DpFedavg, s))?;
    }
    Ok(())
}
