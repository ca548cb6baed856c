//! Estimates smoothness, gradient variance and client dissimilarity for a
//! synthetic federation, then plugs them into the compression sweep.
//!
//! Usage: `cargo run --release --example estimate_constants -- [heterogeneity]`

use pfels::analysis::{estimate_constants, optimal_compression_sweep, BoundConstants, SweepInputs};
use pfels::learner::{make_synthetic_federation, Architecture, SyntheticTask};
use pfels::numerics::RngStream;

fn main() -> pfels::Result<()> {
    let heterogeneity: f64 = std::env::args().nth(1).map(|a| a.parse().expect("heterogeneity")).unwrap_or(0.5);
    let root = RngStream::new(21);
    let arch = Architecture::logistic(10, 4);
    let task = SyntheticTask::new(arch, 1.0, 1.0, &root.child(0))?;
    let clients = make_synthetic_federation(20, 50, &task, heterogeneity, &root.child(1))?;
    let center = arch.init_params(&root.child(2));
    let est = estimate_constants(&clients, &arch, &center, 10, 8, &root.child(3))?;
    println!("heterogeneity {heterogeneity}: {est:#?}");

    let d = arch.dim();
    let c = BoundConstants {
        smoothness: est.smoothness,
        gamma_sq: est.gamma_sq,
        kappa_sq: est.kappa_sq,
        zeta_sq: est.zeta_sq,
        initial_gap: est.initial_gap,
        learning_rate: 0.05,
        steps: 5,
        cohort: 10,
        d,
        k: d,
        noise_std: 1.0,
        rounds: 100,
        betas: vec![1.0],
    };
    let inputs = SweepInputs {
        round_gains: vec![vec![0.01, 0.02, 0.05]],
        round_budgets: vec![vec![d as f64 * 10.0; 3]],
        clip_gradient: 1.0,
        epsilon: 0.1,
        c2: 0.05,
    };
    let sweep = optimal_compression_sweep(&c, &inputs)?;
    let best = &sweep.table[sweep.best_k - 1].1;
    println!("d = {d}, bound-minimizing k = {} (total {:.4})", sweep.best_k, best.total);
    Ok(())
}
