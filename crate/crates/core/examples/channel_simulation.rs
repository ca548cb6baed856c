//! Over-the-air aggregation on a simulated fading channel: channel inversion,
//! superposition, receiver noise, and the server-side reconstruction error.
//!
//! Usage: `cargo run --release --example channel_simulation -- [beta]`

use pfels::channel::{aircomp_transmit, draw_channel, ChannelParams, EnergyLedger};
use pfels::numerics::{gaussian_sample, ModelVector, RngStream};

fn main() -> pfels::Result<()> {
    let beta: f64 = std::env::args().nth(1).map(|a| a.parse().expect("beta")).unwrap_or(0.5);
    let (d, cohort) = (200, 10);
    let params = ChannelParams::default();
    let root = RngStream::new(5);
    let devices: Vec<usize> = (0..cohort).collect();
    let channel = draw_channel(&devices, &params, &root.child(0))?;

    let updates: Vec<ModelVector> = devices.iter().map(|&i| gaussian_sample(&root.derive(&[1, i as u64]), d, 0.1)).collect();
    let signals: Vec<ModelVector> = updates.iter().zip(&channel.gains).map(|(u, h)| u.scaled(beta / h)).collect();
    let mut ledger = EnergyLedger::new();
    for (&dev, x) in devices.iter().zip(&signals) {
        ledger.record_energy(dev, x);
    }

    let received = aircomp_transmit(&signals, &channel.gains, params.noise_std, &root.child(2))?;
    let estimate = received.scaled(1.0 / (beta * cohort as f64));
    let mut mean = ModelVector::zeros(d);
    for u in &updates {
        mean.axpy(1.0 / cohort as f64, u);
    }

    println!("{:>6} {:>10} {:>14}", "device", "gain", "energy");
    for (&dev, h) in devices.iter().zip(&channel.gains) {
        println!("{:>6} {:>10.5} {:>14.4e}", dev, h, ledger.device_energy(dev));
    }
    let err = estimate.sub(&mean).norm();
    println!("beta {beta}, min gain {:.5}", channel.min_gain());
    println!(
        "|estimate - mean| = {err:.4e}, expected noise norm sigma sqrt(d)/(r beta) = {:.4e}",
        params.noise_std * (d as f64).sqrt() / (cohort as f64 * beta)
    );
    println!("total energy {:.4e}", ledger.total_energy());
    Ok(())
}
