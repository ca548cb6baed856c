//! Evaluates the convergence bound over every k and reports the minimizer,
//! first on a hand-set problem and then on constants estimated from data.
//!
//! Usage: `cargo run --release --example compression_tradeoff`

use pfels::analysis::{convergence_bound, optimal_compression_sweep};
use pfels::validation::interior_tradeoff_inputs;

fn main() -> pfels::Result<()> {
    let (c, inputs) = interior_tradeoff_inputs();
    let sweep = optimal_compression_sweep(&c, &inputs)?;
    println!("{:>5} {:>14} {:>14} {:>14} {:>14}", "k", "optimization", "compression", "privacy", "total");
    for (k, t) in sweep.table.iter().filter(|(k, _)| k % 5 == 0 || *k == sweep.best_k) {
        println!(
            "{:>5} {:>14.6} {:>14.6} {:>14.6} {:>14.6}{}",
            k,
            t.optimization,
            t.compression,
            t.privacy,
            t.total,
            if *k == sweep.best_k { "  <- best" } else { "" }
        );
    }

    let mut loose = c.clone();
    loose.noise_std = 0.0;
    let no_noise = convergence_bound(&loose)?;
    println!("without receiver noise the privacy term is {} and k = d is optimal", no_noise.privacy);
    println!("step size ok: {} (max {:.4})", c.step_size_ok(), c.max_learning_rate());
    Ok(())
}
