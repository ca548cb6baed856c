//! Oracle and invariant checks behind `pfels validate` and the acceptance tests.
//!
//! Each check returns a [`CheckOutcome`] instead of panicking so a runner can
//! print the whole table and decide the exit code afterwards.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;

use crate::analysis::{optimal_compression_sweep, BoundConstants, SweepInputs};
use crate::channel::{aircomp_transmit, superpose, ChannelParams};
use crate::error::{Error, Result};
use crate::learner::{
    local_train, loss_and_gradient, Architecture, ClientDataset, LocalMode, ModelKind, Targets, TrainingConfig,
};
use crate::numerics::{clip_to_norm, gaussian_sample, ModelVector, RngStream};
use crate::orchestrator::{reconstruct_update, run_experiment, Algorithm, ExperimentConfig, Simulation};
use crate::power::{beta_pfels, rand_k_energy_check, p2_bruteforce_oracle, RoundConstraints};
use crate::privacy::{dpfedavg_perturb, pfels_c2, privacy_cap};
use crate::sparsifier::{
    expected_reconstruction_oracle, generate_projection, project, variance_oracle,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Reduced trial counts, well under a minute in total.
    Quick,
    /// The trial counts and runtime limits of the acceptance criteria.
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
}

impl CheckOutcome {
    /// One table row: `PASS  #03 sensitivity_soundness  0.41s  detail`.
    pub fn line(&self) -> String {
        format!(
            "{}  #{:02} {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_secs,
            self.detail
        )
    }
}

fn timed(
    id: u8,
    name: &'static str,
    limit: Duration,
    scale: Scale,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> CheckOutcome {
    let start = Instant::now();
    let result = body();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match result {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    if scale == Scale::Full && elapsed > limit {
        passed = false;
        detail = format!("{detail}; over the {}s limit", limit.as_secs());
    }
    CheckOutcome {
        id,
        name,
        passed,
        detail,
        elapsed_secs: elapsed.as_secs_f64(),
    }
}

fn pick(scale: Scale, quick: usize, full: usize) -> usize {
    match scale {
        Scale::Quick => quick,
        Scale::Full => full,
    }
}

const SUITE_SEED: u64 = 0x5eed_2024;

fn root(id: u64) -> RngStream {
    RngStream::new(SUITE_SEED).child(id)
}

/// Exhaustive mean of `AᵀAv` against `(k/d) v` for d in 2..=8.
pub fn check_rand_k_unbiased(scale: Scale) -> CheckOutcome {
    timed(1, "rand_k_unbiased", Duration::from_secs(5), scale, || {
        let vectors = pick(scale, 20, 100);
        let mut worst: f64 = 0.0;
        for d in 2..=8usize {
            for k in 1..=d {
                for j in 0..vectors {
                    let v = gaussian_sample(&root(1).derive(&[d as u64, k as u64, j as u64]), d, 1.0);
                    let mean = expected_reconstruction_oracle(d, k, &v)?;
                    let ratio = k as f64 / d as f64;
                    for i in 0..d {
                        worst = worst.max((mean[i] - ratio * v[i]).abs());
                    }
                }
            }
        }
        Ok((worst < 1e-12, format!("max abs error {worst:.2e}")))
    })
}

/// Exhaustive `E‖AᵀAv − v‖²` against `(1 − k/d)‖v‖²`.
pub fn check_rand_k_variance(scale: Scale) -> CheckOutcome {
    timed(2, "rand_k_variance", Duration::from_secs(5), scale, || {
        let vectors = pick(scale, 20, 100);
        let mut worst: f64 = 0.0;
        for d in 2..=8usize {
            for k in 1..=d {
                for j in 0..vectors {
                    let v = gaussian_sample(&root(2).derive(&[d as u64, k as u64, j as u64]), d, 1.0);
                    let var = variance_oracle(d, k, &v)?;
                    worst = worst.max((var - (1.0 - k as f64 / d as f64) * v.norm_squared()).abs());
                }
            }
        }
        Ok((worst < 1e-12, format!("max abs error {worst:.2e}")))
    })
}

fn random_architecture<R: Rng>(rng: &mut R) -> Architecture {
    let f = rng.random_range(1..=6);
    match rng.random_range(0..3) {
        0 => Architecture::linear(f),
        1 => Architecture::logistic(f, rng.random_range(2..=4)),
        _ => Architecture::mlp(f, rng.random_range(1..=5), rng.random_range(2..=4)),
    }
}

fn random_dataset<R: Rng>(arch: &Architecture, id: usize, n: usize, feature_scale: f64, rng: &mut R) -> Result<ClientDataset> {
    let f = arch.n_features;
    let features = (0..n * f)
        .map(|_| feature_scale * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    let targets = match arch.kind {
        ModelKind::LinearRegression => Targets::Real((0..n).map(|_| feature_scale * (2.0 * rng.random::<f64>() - 1.0)).collect()),
        _ => Targets::Classes((0..n).map(|_| rng.random_range(0..arch.classes)).collect()),
    };
    ClientDataset::new(id, f, features, targets)
}

/// Received aggregates of neighboring cohorts differ by at most `β η steps C₁`.
///
/// Each trial draws a model, data, training hyperparameters, a round
/// projection and channel gains, then adds one extra client, sometimes with
/// extreme data so its gradients always hit the clip.
pub fn check_sensitivity(scale: Scale) -> CheckOutcome {
    timed(3, "sensitivity_soundness", Duration::from_secs(60), scale, || {
        let trials = pick(scale, 2_000, 10_000);
        let channel = ChannelParams::default();
        let mut worst_ratio: f64 = 0.0;
        let mut violations = 0usize;
        for trial in 0..trials {
            let stream = root(3).child(trial as u64);
            let mut rng = stream.child(0).rng();
            let arch = random_architecture(&mut rng);
            let params = gaussian_sample(&stream.child(1), arch.dim(), rng.random_range(0.0..3.0));
            let n = rng.random_range(2..=20);
            let cfg = TrainingConfig {
                learning_rate: rng.random_range(0.001..1.0),
                local_steps: rng.random_range(1..=6),
                local_mode: LocalMode::Steps,
                batch_size: rng.random_range(1..=n),
                clip_gradient: rng.random_range(0.05..5.0),
                momentum: if rng.random_bool(0.3) { rng.random_range(0.0..0.9) } else { 0.0 },
                ..TrainingConfig::default()
            };
            let r = rng.random_range(1..=6);
            let mut deltas = Vec::with_capacity(r + 1);
            for i in 0..=r {
                let adversarial = i == r && rng.random_bool(0.5);
                let scale = if adversarial { 1e3 } else { 1.0 };
                let data = random_dataset(&arch, i, n, scale, &mut rng)?;
                let up = local_train(&arch, &params, &data, &cfg, &stream.derive(&[2, i as u64]))?;
                deltas.push(up.delta);
            }
            let d = arch.dim();
            let k = rng.random_range(1..=d);
            let proj = generate_projection(d, k, &stream.child(3))?;
            let beta = rng.random_range(0.01..10.0);
            let gains: Vec<f64> = (0..=r)
                .map(|_| rng.random_range(channel.gain_lo..=channel.gain_hi))
                .collect();
            let signals = deltas
                .iter()
                .zip(&gains)
                .map(|(delta, h)| project(&proj, delta).map(|x| x.scaled(beta / h)))
                .collect::<Result<Vec<_>>>()?;
            let without = superpose(&signals[..r], &gains[..r])?;
            let with = superpose(&signals, &gains)?;
            let diff = with.sub(&without).norm();
            let bound = beta * cfg.update_norm_bound(cfg.local_steps);
            // rounding slack of the subtraction, relative to the aggregates
            let slack = 1e-12 * (with.norm() + without.norm());
            worst_ratio = worst_ratio.max(diff / bound);
            if diff > bound + slack {
                violations += 1;
            }
        }
        Ok((
            violations == 0,
            format!("{trials} trials, {violations} violations, max diff/bound {worst_ratio:.6}"),
        ))
    })
}

/// `E‖AΔ‖² ≤ (k/d)(η steps C₁)²`, exhaustive for d ≤ 12 (with equality to
/// `(k/d)‖Δ‖²`) and Monte Carlo above.
pub fn check_power_bound(scale: Scale) -> CheckOutcome {
    timed(4, "power_bound", Duration::from_secs(10), scale, || {
        let (eta, steps, c1) = (0.1, 5usize, 1.0);
        let norm_bound = eta * steps as f64 * c1;
        let mut worst_equality: f64 = 0.0;
        let mut failures = 0usize;
        let per_k = pick(scale, 1, 3);
        for d in 2..=12usize {
            for k in 1..=d {
                for j in 0..per_k {
                    let s = root(4).derive(&[d as u64, k as u64, j as u64]);
                    let raw = gaussian_sample(&s, d, 1.0);
                    let len = norm_bound * s.child(1).rng().random::<f64>();
                    let delta = clip_to_norm(&raw.scaled(len / raw.norm()), norm_bound)?;
                    let check = rand_k_energy_check(&delta, k, eta, steps, c1, 0, &s)?;
                    worst_equality =
                        worst_equality.max((check.mean - k as f64 / d as f64 * delta.norm_squared()).abs());
                    failures += usize::from(!check.passed || !check.exhaustive);
                }
            }
        }
        let trials = pick(scale, 500, 4_000);
        for (j, d) in [50usize, 200, 1000].into_iter().enumerate() {
            for k in [1, d / 10, d / 2, d] {
                let s = root(4).derive(&[99, j as u64, k as u64]);
                let delta = clip_to_norm(&gaussian_sample(&s, d, 1.0), norm_bound)?;
                let check = rand_k_energy_check(&delta, k, eta, steps, c1, trials, &s.child(1))?;
                failures += usize::from(!check.passed || check.exhaustive);
            }
        }
        Ok((
            failures == 0 && worst_equality < 1e-12,
            format!("{failures} bound failures, exhaustive equality error {worst_equality:.2e}"),
        ))
    })
}

/// A random single-round P2 instance.
fn random_p2_instance<R: Rng>(rng: &mut R) -> RoundConstraints {
    let r = rng.random_range(1..=10);
    let d = rng.random_range(2..=2000);
    RoundConstraints {
        gains: (0..r).map(|_| rng.random_range(1e-4..=0.1)).collect(),
        budgets: (0..r)
            .map(|_| d as f64 * 10f64.powf(rng.random_range(2.0..15.0) / 10.0))
            .collect(),
        d,
        k: rng.random_range(1..=d),
        learning_rate: rng.random_range(0.001..1.0),
        steps: rng.random_range(1..=10),
        clip_gradient: rng.random_range(0.1..5.0),
        epsilon: if rng.random_bool(0.1) {
            f64::INFINITY
        } else {
            10f64.powf(rng.random_range(-3.0..0.5))
        },
        c2: 10f64.powf(rng.random_range(-3.0..0.0)),
    }
}

/// Compares the closed-form β (multiplied by `tamper`) with a grid search of
/// relative resolution 1e-4 on `instances` random rounds.
pub fn power_optimality_trials(instances: usize, tamper: f64) -> Result<(usize, String)> {
    const GRID: f64 = 1e-4;
    let mut failures = 0usize;
    let mut worst_gap: f64 = 0.0;
    for j in 0..instances {
        let round = random_p2_instance(&mut root(5).child(j as u64).rng());
        let closed = beta_pfels(&round.inputs(), round.epsilon, round.c2)?.beta * tamper;
        let grid = p2_bruteforce_oracle(std::slice::from_ref(&round), GRID)?[0];
        let gap = (closed - grid) / grid;
        worst_gap = worst_gap.max(gap.abs());
        // the scan step never exceeds GRID times the point it returns
        let within_step = closed >= grid * (1.0 - 1e-12) && closed - grid <= GRID * grid * (1.0 + 1e-9);
        let private = round.epsilon.is_infinite() || round.c2 * closed <= round.epsilon;
        failures += usize::from(!(within_step && private));
    }
    Ok((failures, format!("{instances} instances, {failures} failures, max relative gap {worst_gap:.2e}")))
}

pub fn check_power_optimality(scale: Scale) -> CheckOutcome {
    timed(5, "power_optimality", Duration::from_secs(30), scale, || {
        let (failures, detail) = power_optimality_trials(pick(scale, 100, 500), 1.0)?;
        Ok((failures == 0, detail))
    })
}

/// The +1% tampered β must be caught by the optimality oracle.
pub fn check_power_mutation(scale: Scale) -> CheckOutcome {
    timed(5, "power_optimality_mutation", Duration::from_secs(30), scale, || {
        let (failures, detail) = power_optimality_trials(pick(scale, 20, 100), 1.01)?;
        Ok((failures > 0, format!("tampered beta: {detail}")))
    })
}

fn compliance_configs() -> Vec<ExperimentConfig> {
    let mut a = ExperimentConfig::new(Algorithm::Pfels);
    a.compression = 0.25;
    a.privacy.epsilon = 1.0;

    let mut b = ExperimentConfig::new(Algorithm::Pfels);
    b.data.model = ModelKind::LinearRegression;
    b.compression = 0.5;
    b.privacy.epsilon = 0.05;
    b.training.learning_rate = 0.05;
    b.seed = 1;

    let mut c = ExperimentConfig::new(Algorithm::Pfels);
    c.data.model = ModelKind::Mlp1Hidden;
    c.compression = 0.1;
    c.privacy.epsilon = f64::INFINITY;
    c.seed = 2;
    vec![a, b, c]
}

/// Re-estimates every device's `E‖x_i‖²` over fresh projections and compares
/// it with `P_i`, allowing three standard errors.
pub fn check_power_compliance(scale: Scale) -> CheckOutcome {
    timed(6, "power_compliance", Duration::from_secs(60), scale, || {
        let configs = pick(scale, 1, 3);
        let rounds = pick(scale, 20, 50);
        let draws = pick(scale, 100, 200);
        let (mut checked, mut violations) = (0usize, 0usize);
        let mut worst: f64 = 0.0;
        for (c, mut cfg) in compliance_configs().into_iter().take(configs).enumerate() {
            cfg.rounds = rounds;
            cfg.eval_every = rounds;
            let mut sim = Simulation::new(cfg)?;
            let (d, k) = (sim.dim(), sim.kept_dim());
            for t in 0..rounds {
                let out = sim.step()?;
                let beta = out.trace.beta.ok_or_else(|| Error::Invariant("PFELS round without beta".into()))?;
                for (i, delta) in out.trace.deltas.iter().enumerate() {
                    let alpha = beta / out.trace.gains[i];
                    let samples: Vec<f64> = (0..draws)
                        .map(|m| {
                            let s = root(6).derive(&[c as u64, t as u64, i as u64, m as u64]);
                            let proj = generate_projection(d, k, &s)?;
                            Ok(alpha * alpha * project(&proj, delta)?.norm_squared())
                        })
                        .collect::<Result<_>>()?;
                    let (mean, se) = crate::power::mean_and_std_err(&samples);
                    let budget = out.trace.budgets[i];
                    worst = worst.max(mean / budget);
                    checked += 1;
                    violations += usize::from(mean > budget + 3.0 * se);
                }
            }
        }
        Ok((
            violations == 0,
            format!("{checked} device-rounds, {violations} over budget, max E|x|^2/P {worst:.4}"),
        ))
    })
}

/// Noiseless uncompressed PFELS, noiseless WFL-P and FedAvg share one loss trajectory.
pub fn check_degeneration(scale: Scale) -> CheckOutcome {
    timed(7, "degeneration_equivalence", Duration::from_secs(30), scale, || {
        let rounds = pick(scale, 10, 30);
        let run = |algo| {
            let mut cfg = ExperimentConfig::new(algo);
            cfg.rounds = rounds;
            cfg.seed = 11;
            cfg.compression = 1.0;
            cfg.channel.noise_std = 0.0;
            cfg.privacy.epsilon = f64::INFINITY;
            run_experiment(&cfg)
        };
        let fedavg = run(Algorithm::Fedavg)?;
        let mut worst: f64 = 0.0;
        for algo in [Algorithm::Pfels, Algorithm::WflP] {
            for (a, b) in run(algo)?.iter().zip(&fedavg) {
                worst = worst.max((a.train_loss - b.train_loss).abs());
            }
        }
        Ok((worst < 1e-9, format!("{rounds} rounds, max abs loss difference {worst:.2e}")))
    })
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Zero updates through the channel leave only `σ₀/(rβ)` noise on kept
/// coordinates; DP-FedAvg's artificial noise has per-device variance `C²σ²/r`.
pub fn check_noise_calibration(scale: Scale) -> CheckOutcome {
    timed(8, "noise_calibration", Duration::from_secs(30), scale, || {
        let (d, k, r) = (400usize, 100usize, 10usize);
        let (sigma0, beta) = (1.3, 0.8);
        let rounds = 1_000;
        let mut kept = Vec::with_capacity(rounds * k);
        let zeros = vec![ModelVector::zeros(k); r];
        for t in 0..rounds {
            let s = root(8).child(t as u64);
            let proj = generate_projection(d, k, &s.child(0))?;
            let gains: Vec<f64> = {
                let mut rng = s.child(1).rng();
                (0..r).map(|_| rng.random_range(1e-4..=0.1)).collect()
            };
            let y = aircomp_transmit(&zeros, &gains, sigma0, &s.child(2))?;
            let update = reconstruct_update(&proj, &y, r, beta, false)?;
            kept.extend(proj.omega().iter().map(|&i| update[i]));
        }
        let server_std = sample_std(&kept);
        let server_expected = sigma0 / (r as f64 * beta);
        let server_ok = (server_std / server_expected - 1.0).abs() <= 0.05;

        let (clip, multiplier) = (2.0, 1.5);
        let per_device_expected = clip * clip * multiplier * multiplier / r as f64;
        let dim = 10_000;
        let devices: Vec<ModelVector> = (0..r)
            .map(|i| dpfedavg_perturb(&ModelVector::zeros(dim), clip, multiplier, r, &root(8).derive(&[1, i as u64])))
            .collect::<Result<_>>()?;
        let per_device: Vec<f64> = devices.iter().flat_map(|v| v.iter().copied()).collect();
        let per_device_var = sample_std(&per_device).powi(2);
        let mut average = ModelVector::zeros(dim);
        for v in &devices {
            average.axpy(1.0 / r as f64, v);
        }
        let average_var = sample_std(average.as_slice()).powi(2);
        let average_expected = per_device_expected / r as f64;
        let dp_ok = (per_device_var / per_device_expected - 1.0).abs() <= 0.05
            && (average_var / average_expected - 1.0).abs() <= 0.05;

        Ok((
            server_ok && dp_ok,
            format!(
                "server std {server_std:.5} vs {server_expected:.5} over {} samples; \
                 dp per-device var {per_device_var:.4} vs C^2 s^2/r = {per_device_expected:.4}; \
                 averaged {average_var:.4} vs {average_expected:.4}",
                kept.len()
            ),
        ))
    })
}

/// The fixed constant set whose bound has an interior optimal k.
pub fn interior_tradeoff_inputs() -> (BoundConstants, SweepInputs) {
    let constants = BoundConstants {
        smoothness: 1.0,
        gamma_sq: 1.0,
        kappa_sq: 0.5,
        zeta_sq: 1.0,
        initial_gap: 1.0,
        learning_rate: 0.1,
        steps: 5,
        cohort: 10,
        d: 100,
        k: 100,
        noise_std: 1.0,
        rounds: 100,
        betas: vec![1.0],
    };
    // h √(dP) / (C₁ η τ) = 4, so the power cap is 4/√k; ε/C₂ = 2 binds for k < 4
    let inputs = SweepInputs {
        round_gains: vec![vec![0.02, 0.05]],
        round_budgets: vec![vec![100.0, 100.0]],
        clip_gradient: 1.0,
        epsilon: 0.02,
        c2: 0.01,
    };
    (constants, inputs)
}

/// The bound trades compression against privacy with an interior optimum.
pub fn check_compression_tradeoff(scale: Scale) -> CheckOutcome {
    timed(11, "compression_tradeoff", Duration::from_secs(5), scale, || {
        let (constants, inputs) = interior_tradeoff_inputs();
        let sweep = optimal_compression_sweep(&constants, &inputs)?;
        let d = constants.d;
        let interior = sweep.best_k > 1 && sweep.best_k < d;
        let monotone = sweep.table.windows(2).all(|w| {
            w[1].1.compression <= w[0].1.compression && w[1].1.privacy >= w[0].1.privacy
        });
        Ok((
            interior && monotone,
            format!("best k = {} of d = {d}, monotone parts: {monotone}", sweep.best_k),
        ))
    })
}

/// Analytic gradients of all model kinds against central differences.
pub fn check_gradients(scale: Scale) -> CheckOutcome {
    timed(12, "gradient_correctness", Duration::from_secs(10), scale, || {
        let probes = pick(scale, 10, 50);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let archs = [
            Architecture::linear(4),
            Architecture::logistic(4, 3),
            Architecture::mlp(4, 5, 3),
        ];
        for (a, arch) in archs.iter().enumerate() {
            for p in 0..probes {
                let s = root(12).derive(&[a as u64, p as u64]);
                let mut rng = s.child(0).rng();
                let data = random_dataset(arch, 0, 8, 1.0, &mut rng)?;
                let batch = data.all_indices();
                let params = gaussian_sample(&s.child(1), arch.dim(), 1.0);
                let (_, grad) = loss_and_gradient(arch, &params, &data, &batch)?;
                for i in 0..arch.dim() {
                    let mut plus = params.clone();
                    plus[i] += h;
                    let mut minus = params.clone();
                    minus[i] -= h;
                    let fd = (loss_and_gradient(arch, &plus, &data, &batch)?.0
                        - loss_and_gradient(arch, &minus, &data, &batch)?.0)
                        / (2.0 * h);
                    let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-4);
                    worst = worst.max(rel);
                }
            }
        }
        Ok((worst < 1e-5, format!("3 model kinds x {probes} probes, max relative error {worst:.2e}")))
    })
}

/// Runs every check in criterion order.
pub fn run_suite(scale: Scale) -> Vec<CheckOutcome> {
    let mut out = vec![
        check_rand_k_unbiased(scale),
        check_rand_k_variance(scale),
        check_sensitivity(scale),
        check_power_bound(scale),
        check_power_optimality(scale),
        check_power_mutation(scale),
        check_power_compliance(scale),
        check_degeneration(scale),
        check_noise_calibration(scale),
    ];
    out.extend(check_directional(scale));
    out.push(check_compression_tradeoff(scale));
    out.push(check_gradients(scale));
    out
}

/// The fixed non-IID logistic task of the directional comparisons.
///
/// The SNR range sits above the default 2-15 dB so the over-the-air burst
/// noise leaves room for every algorithm to learn at this model size.
pub fn directional_config(algorithm: Algorithm, epsilon: f64, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(algorithm);
    cfg.seed = seed;
    cfg.rounds = 200;
    cfg.eval_every = 200;
    cfg.compression = DIRECTIONAL_COMPRESSION;
    cfg.privacy.epsilon = epsilon;
    cfg.data.model = ModelKind::LogisticRegression;
    cfg.data.n_features = 19;
    cfg.data.classes = 2;
    cfg.data.heterogeneity = 0.8;
    cfg.data.separation = 0.5;
    cfg.data.noise_std = 1.0;
    cfg.training.learning_rate = 0.1;
    cfg.training.clip_gradient = 1.0;
    cfg.power.snr_db_lo = 40.0;
    cfg.power.snr_db_hi = 55.0;
    cfg
}

/// p with p·d integral for the directional task (d = 40).
pub const DIRECTIONAL_COMPRESSION: f64 = 0.25;
/// The matched moderate budget: C₂ times the full-dimension power cap of a
/// device at mean gain and mid-range SNR, so WFL-PDP is privacy-limited in
/// some rounds and power-limited in others.
pub const DIRECTIONAL_EPSILON: f64 = 1.35;

/// Smallest ε above which WFL-PDP can never be privacy-limited in `cfg`'s
/// federation: C₂ times the largest possible full-dimension power cap.
pub fn wflpdp_regime_boundary(cfg: &ExperimentConfig) -> Result<f64> {
    let sim = Simulation::new(cfg.clone())?;
    let p_max = sim.budgets().iter().copied().fold(0.0, f64::max);
    let t = &cfg.training;
    let c2 = pfels_c2(
        t.learning_rate,
        sim.certified_steps(),
        t.clip_gradient,
        cfg.cohort,
        cfg.population,
        cfg.delta(),
        cfg.channel.noise_std,
    )?;
    let cap_max = cfg.channel.gain_hi * p_max.sqrt() / (t.clip_gradient * t.learning_rate * sim.certified_steps() as f64);
    Ok(c2 * cap_max)
}

/// Directional comparisons on the fixed task: accuracy ordering and the
/// WFL-PDP/WFL-P merge (#9), energy and subcarrier ordering (#10).
pub fn check_directional(scale: Scale) -> Vec<CheckOutcome> {
    let seeds = pick(scale, 1, 3) as u64;
    let started = Instant::now();
    let runs = (|| -> Result<_> {
        let mut out = Vec::new();
        for seed in 0..seeds {
            let moderate = |algo| run_experiment(&directional_config(algo, DIRECTIONAL_EPSILON, seed));
            let pfels = moderate(Algorithm::Pfels)?;
            let pdp = moderate(Algorithm::WflPdp)?;
            let wflp = moderate(Algorithm::WflP)?;
            let boundary = wflpdp_regime_boundary(&directional_config(Algorithm::WflPdp, 1.0, seed))?;
            let large = privacy_cap(boundary, 1.0) * 1.01;
            let pdp_large = run_experiment(&directional_config(Algorithm::WflPdp, large, seed))?;
            let wflp_large = run_experiment(&directional_config(Algorithm::WflP, large, seed))?;
            out.push((pfels, pdp, wflp, pdp_large, wflp_large, boundary));
        }
        Ok(out)
    })();
    let shared = started.elapsed();
    let runs = match runs {
        Ok(r) => r,
        Err(e) => {
            return [(9, "directional_accuracy"), (10, "directional_energy")]
                .into_iter()
                .map(|(id, name)| CheckOutcome {
                    id,
                    name,
                    passed: false,
                    detail: format!("error: {e}"),
                    elapsed_secs: shared.as_secs_f64(),
                })
                .collect();
        }
    };
    let final_metric = |r: &[crate::orchestrator::RoundRecord]| r.last().and_then(|x| x.test_metric).unwrap_or(f64::NAN);

    let accuracy = timed(9, "directional_accuracy", Duration::from_secs(300), scale, || {
        let n = runs.len() as f64;
        let pfels_mean = runs.iter().map(|r| final_metric(&r.0)).sum::<f64>() / n;
        let pdp_mean = runs.iter().map(|r| final_metric(&r.1)).sum::<f64>() / n;
        let merged = runs.iter().all(|r| {
            r.3.len() == r.4.len()
                && r.3.iter().zip(&r.4).all(|(a, b)| {
                    a.train_loss == b.train_loss
                        && a.test_metric == b.test_metric
                        && a.beta == b.beta
                        && a.energy_cum == b.energy_cum
                })
        });
        let per_seed: Vec<String> = runs
            .iter()
            .map(|r| format!("{:.3}/{:.3}", final_metric(&r.0), final_metric(&r.1)))
            .collect();
        Ok((
            pfels_mean >= pdp_mean && merged,
            format!(
                "eps {DIRECTIONAL_EPSILON}: mean test metric pfels {pfels_mean:.4} vs wfl_pdp {pdp_mean:.4} \
                 (per seed {}); wfl_pdp == wfl_p above boundary {:.4}: {merged}",
                per_seed.join(" "),
                runs.iter().map(|r| r.5).fold(0.0, f64::max)
            ),
        ))
    });

    let energy = timed(10, "directional_energy", Duration::from_secs(300), scale, || {
        let mut ok = true;
        let mut parts = Vec::new();
        for r in &runs {
            let (pf, pdp, wp) = (r.0.last(), r.1.last(), r.2.last());
            let (pf, pdp, wp) = match (pf, pdp, wp) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(Error::Invariant("empty run".into())),
            };
            let d = wp.k;
            let k = pf.k;
            let ratio_exact = (DIRECTIONAL_COMPRESSION * d as f64) == k as f64
                && pf.subcarriers_cum * d as u64 == wp.subcarriers_cum * k as u64
                && pdp.subcarriers_cum == wp.subcarriers_cum;
            ok &= pf.energy_cum < pdp.energy_cum && pdp.energy_cum <= wp.energy_cum && ratio_exact;
            parts.push(format!(
                "{:.3e} < {:.3e} <= {:.3e}, subcarriers {} vs {}",
                pf.energy_cum, pdp.energy_cum, wp.energy_cum, pf.subcarriers_cum, wp.subcarriers_cum
            ));
        }
        Ok((ok, parts.join("; ")))
    });
    let mut accuracy = accuracy;
    let mut energy = energy;
    // the runs are shared; charge their time to both rows
    accuracy.elapsed_secs += shared.as_secs_f64();
    energy.elapsed_secs += shared.as_secs_f64();
    if scale == Scale::Full && shared > Duration::from_secs(300) {
        for row in [&mut accuracy, &mut energy] {
            row.passed = false;
            row.detail.push_str("; over the 300s limit");
        }
    }
    vec![accuracy, energy]
}
