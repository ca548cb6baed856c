//! Closed-form convergence bound for the sparsified over-the-air scheme, split
//! into its optimization, compression and privacy parts.
//!
//! The bound is a diagnostic. Nothing here feeds back into training.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{loss_and_gradient, Architecture, ClientDataset};
use crate::numerics::{gaussian_sample, purpose, ModelVector, RngStream};
use crate::power::{beta_pfels, PowerInputs};

/// Problem constants entering the bound. Smoothness, variance and
/// dissimilarity values are usually estimates, see [`estimate_constants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub smoothness: f64,
    /// γ² ≥ 1
    pub gamma_sq: f64,
    /// κ² ≥ 0
    pub kappa_sq: f64,
    /// mean minibatch-gradient variance ζ̄²
    pub zeta_sq: f64,
    /// f(θ⁰) − f_inf
    pub initial_gap: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub cohort: usize,
    pub d: usize,
    pub k: usize,
    pub noise_std: f64,
    pub rounds: usize,
    /// Per-round β. A single entry is reused for every round.
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub optimization: f64,
    pub compression: f64,
    pub privacy: f64,
    pub total: f64,
}

impl BoundConstants {
    pub fn lambda(&self) -> f64 {
        1.0 - self.k as f64 / self.d as f64
    }

    /// Largest learning rate the bound is proven for.
    pub fn max_learning_rate(&self) -> f64 {
        let tl = self.steps as f64 * self.smoothness;
        let a = 1.0 / (24.0 * tl * (self.lambda() + 1.0) * self.gamma_sq);
        let b = 1.0 / (4.0 * tl * (4.0 * self.gamma_sq + 2.0).sqrt());
        let c = 1.0 / (12.0 * tl);
        a.min(b).min(c)
    }

    /// Whether η satisfies the step-size condition. Violations only warrant a warning.
    pub fn step_size_ok(&self) -> bool {
        self.learning_rate <= self.max_learning_rate()
    }

    fn validate(&self) -> Result<()> {
        if self.gamma_sq < 1.0 || self.kappa_sq < 0.0 || self.zeta_sq < 0.0 || self.smoothness < 0.0 {
            return Err(Error::domain("need gamma_sq >= 1 and kappa_sq, zeta_sq, smoothness >= 0"));
        }
        if self.k == 0 || self.k > self.d {
            return Err(Error::config("need 1 <= k <= d"));
        }
        if self.rounds == 0 || self.cohort == 0 || self.steps == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::config("rounds, cohort, steps and learning_rate must be positive"));
        }
        if self.betas.len() != 1 && self.betas.len() != self.rounds {
            return Err(Error::config(format!(
                "expected 1 or {} beta values, got {}",
                self.rounds,
                self.betas.len()
            )));
        }
        Ok(())
    }
}

/// Evaluates the three additive error terms and their sum.
///
/// A zero β with nonzero channel noise makes the privacy term `+∞`.
pub fn convergence_bound(c: &BoundConstants) -> Result<BoundTerms> {
    c.validate()?;
    let et = c.learning_rate * c.steps as f64;
    let t = c.rounds as f64;
    let r = c.cohort as f64;
    let optimization =
        8.0 * c.initial_gap / (t * et) + 8.0 * et * c.smoothness * (3.0 * c.kappa_sq + 2.0 * c.zeta_sq);
    let compression = 8.0 * (et * c.smoothness * (2.0 * c.kappa_sq + c.zeta_sq) + 1.5 * c.zeta_sq) * c.lambda() / r;
    let privacy = if c.noise_std == 0.0 {
        0.0
    } else {
        let inv_sq_sum: f64 = if c.betas.len() == 1 {
            t / (c.betas[0] * c.betas[0])
        } else {
            c.betas.iter().map(|b| 1.0 / (b * b)).sum()
        };
        4.0 * c.smoothness * c.k as f64 * c.noise_std * c.noise_std / (et * r.powi(3) * t) * inv_sq_sum
    };
    Ok(BoundTerms {
        optimization,
        compression,
        privacy,
        total: optimization + compression + privacy,
    })
}

/// Channel, budget and privacy inputs that fix β for each k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepInputs {
    /// Gains of the cohort in each round.
    pub round_gains: Vec<Vec<f64>>,
    /// Budgets aligned with each round's gains.
    pub round_budgets: Vec<Vec<f64>>,
    pub clip_gradient: f64,
    pub epsilon: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionSweep {
    pub best_k: usize,
    pub table: Vec<(usize, BoundTerms)>,
}

/// Evaluates the bound for every k in `1..=d` with β set by the optimal power
/// rule, and returns the minimizer (smallest k on ties).
pub fn optimal_compression_sweep(c: &BoundConstants, inputs: &SweepInputs) -> Result<CompressionSweep> {
    if c.d < 2 {
        return Err(Error::config("compression sweep needs d >= 2"));
    }
    if inputs.round_gains.is_empty() || inputs.round_gains.len() != inputs.round_budgets.len() {
        return Err(Error::config("need matching, nonempty per-round gains and budgets"));
    }
    let mut table = Vec::with_capacity(c.d);
    for k in 1..=c.d {
        let betas = inputs
            .round_gains
            .iter()
            .zip(&inputs.round_budgets)
            .map(|(gains, budgets)| {
                let p = PowerInputs {
                    gains,
                    budgets,
                    d: c.d,
                    k,
                    learning_rate: c.learning_rate,
                    steps: c.steps,
                    clip_gradient: inputs.clip_gradient,
                };
                beta_pfels(&p, inputs.epsilon, inputs.c2).map(|dec| dec.beta)
            })
            .collect::<Result<Vec<_>>>()?;
        let consts = BoundConstants {
            k,
            rounds: betas.len(),
            betas,
            ..c.clone()
        };
        table.push((k, convergence_bound(&consts)?));
    }
    let best_k = table
        .iter()
        .fold((0, f64::INFINITY), |best, (k, terms)| {
            if terms.total < best.1 {
                (*k, terms.total)
            } else {
                best
            }
        })
        .0;
    Ok(CompressionSweep { best_k, table })
}

/// Empirical stand-ins for the smoothness, variance and dissimilarity constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedConstants {
    pub smoothness: f64,
    pub gamma_sq: f64,
    pub kappa_sq: f64,
    pub zeta_sq: f64,
    /// Mean loss at `center`; losses are nonnegative so f_inf ≥ 0.
    pub initial_gap: f64,
}

const POWER_ITERATIONS: usize = 60;
const VARIANCE_BATCHES: usize = 16;

fn full_gradient(arch: &Architecture, params: &ModelVector, data: &ClientDataset) -> Result<(f64, ModelVector)> {
    loss_and_gradient(arch, params, data, &data.all_indices())
}

/// Estimates the constants from `probes` random points around `center`.
///
/// * smoothness: the largest gradient-difference ratio `‖∇fᵢ(θ+sv) − ∇fᵢ(θ)‖/s`,
///   with v refined by power iteration
/// * ζ̄²: client-average of the worst minibatch-gradient variance across probes
/// * γ², κ²: least-squares slope of `mean‖∇fᵢ‖²` on `‖∇f‖²`, floored at one,
///   with κ² the smallest intercept that makes the fit an upper bound
pub fn estimate_constants(
    clients: &[ClientDataset],
    arch: &Architecture,
    center: &ModelVector,
    batch_size: usize,
    probes: usize,
    stream: &RngStream,
) -> Result<EstimatedConstants> {
    use rand::seq::index::sample;
    if probes < 2 {
        return Err(Error::config("estimate_constants needs at least 2 probes"));
    }
    if clients.is_empty() {
        return Err(Error::config("empty federation"));
    }
    center.check_len(arch.dim())?;
    let d = arch.dim();
    let n_clients = clients.len() as f64;
    let stream = stream.child(purpose::PROBE);

    let mut smoothness: f64 = 0.0;
    let mut zeta_per_client = vec![0.0f64; clients.len()];
    let mut dissim_points = Vec::with_capacity(probes);
    let mut initial_gap = 0.0;

    for p in 0..probes {
        let pstream = stream.child(p as u64);
        let theta = if p == 0 {
            center.clone()
        } else {
            center.add(&gaussian_sample(&pstream.child(0), d, 1.0))
        };
        let mut mean_grad = ModelVector::zeros(d);
        let mut mean_sq_norm = 0.0;
        for (i, client) in clients.iter().enumerate() {
            let cstream = pstream.derive(&[1, i as u64]);
            let (loss, grad) = full_gradient(arch, &theta, client)?;
            if p == 0 {
                initial_gap += loss / n_clients;
            }
            mean_grad.axpy(1.0 / n_clients, &grad);
            mean_sq_norm += grad.norm_squared() / n_clients;

            // power iteration on gradient differences
            let mut v = gaussian_sample(&cstream.child(0), d, 1.0);
            v.scale_in_place(1.0 / v.norm());
            let s = 1e-4;
            for _ in 0..POWER_ITERATIONS {
                let (_, moved) = full_gradient(arch, &theta.add(&v.scaled(s)), client)?;
                let diff = moved.sub(&grad).scaled(1.0 / s);
                let ratio = diff.norm();
                smoothness = smoothness.max(ratio);
                if ratio == 0.0 {
                    break;
                }
                v = diff.scaled(1.0 / ratio);
            }

            let n = client.len();
            let b = batch_size.min(n);
            let mut var = 0.0;
            for j in 0..VARIANCE_BATCHES {
                let mut batch = sample(&mut cstream.derive(&[1, j as u64]).rng(), n, b).into_vec();
                batch.sort_unstable();
                let (_, g) = loss_and_gradient(arch, &theta, client, &batch)?;
                var += g.sub(&grad).norm_squared() / VARIANCE_BATCHES as f64;
            }
            zeta_per_client[i] = zeta_per_client[i].max(var);
        }
        dissim_points.push((mean_grad.norm_squared(), mean_sq_norm));
    }

    let m = dissim_points.len() as f64;
    let mx = dissim_points.iter().map(|p| p.0).sum::<f64>() / m;
    let my = dissim_points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = dissim_points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = dissim_points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let gamma_sq = slope.max(1.0);
    let kappa_sq = dissim_points
        .iter()
        .map(|(x, y)| y - gamma_sq * x)
        .fold(0.0f64, f64::max);

    Ok(EstimatedConstants {
        smoothness,
        gamma_sq,
        kappa_sq,
        zeta_sq: zeta_per_client.iter().sum::<f64>() / n_clients,
        initial_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::{make_synthetic_federation, SyntheticTask, Targets};

    fn base() -> BoundConstants {
        BoundConstants {
            smoothness: 1.0,
            gamma_sq: 1.5,
            kappa_sq: 0.5,
            zeta_sq: 1.0,
            initial_gap: 2.0,
            learning_rate: 0.1,
            steps: 5,
            cohort: 10,
            d: 100,
            k: 30,
            noise_std: 1.0,
            rounds: 100,
            betas: vec![2.0],
        }
    }

    #[test]
    fn degenerate_terms_vanish() {
        let c = BoundConstants { noise_std: 0.0, ..base() };
        assert_eq!(convergence_bound(&c).unwrap().privacy, 0.0);
        let c = BoundConstants { k: 100, ..base() };
        assert_eq!(convergence_bound(&c).unwrap().compression, 0.0);
    }

    #[test]
    fn hand_evaluated_terms() {
        let t = convergence_bound(&base()).unwrap();
        // ητ = 0.5
        let opt = 8.0 * 2.0 / (100.0 * 0.5) + 8.0 * 0.5 * (1.5 + 2.0);
        let comp = 8.0 * (0.5 * (1.0 + 1.0) + 1.5) * 0.7 / 10.0;
        let priv_ = 4.0 * 30.0 / (0.5 * 1000.0 * 100.0) * 100.0 / 4.0;
        assert!((t.optimization - opt).abs() < 1e-12);
        assert!((t.compression - comp).abs() < 1e-12);
        assert!((t.privacy - priv_).abs() < 1e-12);
        assert_eq!(t.total, t.optimization + t.compression + t.privacy);
    }

    #[test]
    fn privacy_scales_inverse_square() {
        let betas: Vec<f64> = (1..=100).map(|i| 0.5 + i as f64 / 50.0).collect();
        let a = convergence_bound(&BoundConstants { betas: betas.clone(), ..base() }).unwrap();
        let doubled = betas.iter().map(|b| 2.0 * b).collect();
        let b = convergence_bound(&BoundConstants { betas: doubled, ..base() }).unwrap();
        assert!((b.privacy - a.privacy / 4.0).abs() < 1e-12 * a.privacy);
        let zero = convergence_bound(&BoundConstants { betas: vec![0.0], ..base() }).unwrap();
        assert!(zero.privacy.is_infinite());
    }

    #[test]
    fn floor_terms_do_not_depend_on_rounds() {
        let a = convergence_bound(&base()).unwrap();
        let b = convergence_bound(&BoundConstants { rounds: 1000, ..base() }).unwrap();
        assert!(b.optimization < a.optimization);
        assert_eq!(a.compression, b.compression);
        assert!((a.privacy - b.privacy).abs() < 1e-15);
        let floor = 8.0 * 0.5 * (3.0 * 0.5 + 2.0);
        assert!(b.optimization - floor < a.optimization - floor);
    }

    #[test]
    fn step_size_condition() {
        let c = base();
        // min{1/(24·5·1.7·1.5), 1/(20√8), 1/60}
        let expected = (1.0f64 / (24.0 * 5.0 * 1.7 * 1.5)).min(1.0 / (20.0 * 8f64.sqrt())).min(1.0 / 60.0);
        assert!((c.max_learning_rate() - expected).abs() < 1e-15);
        assert!(!c.step_size_ok());
        assert!(BoundConstants { learning_rate: 1e-3, ..c }.step_size_ok());
    }

    fn sweep_inputs(epsilon: f64, c2: f64) -> SweepInputs {
        SweepInputs {
            round_gains: vec![vec![0.01, 0.02, 0.05], vec![0.03, 0.01, 0.02]],
            round_budgets: vec![vec![100.0, 50.0, 80.0], vec![60.0, 100.0, 50.0]],
            clip_gradient: 1.0,
            epsilon,
            c2,
        }
    }

    #[test]
    fn noiseless_unbounded_prefers_full_dimension() {
        let c = BoundConstants { noise_std: 0.0, ..base() };
        let sweep = optimal_compression_sweep(&c, &sweep_inputs(f64::INFINITY, 1.0)).unwrap();
        assert_eq!(sweep.best_k, 100);
        assert_eq!(sweep.table.len(), 100);
    }

    #[test]
    fn ties_go_to_smaller_k() {
        // no privacy noise and zero variance: every term is flat in k
        let c = BoundConstants {
            noise_std: 0.0,
            zeta_sq: 0.0,
            kappa_sq: 0.0,
            ..base()
        };
        let sweep = optimal_compression_sweep(&c, &sweep_inputs(1.0, 0.1)).unwrap();
        assert_eq!(sweep.best_k, 1);
    }

    #[test]
    fn monotone_error_parts() {
        let sweep = optimal_compression_sweep(&base(), &sweep_inputs(2.0, 0.5)).unwrap();
        for w in sweep.table.windows(2) {
            assert!(w[1].1.compression <= w[0].1.compression);
            assert!(w[1].1.privacy >= w[0].1.privacy);
        }
    }

    /// Largest eigenvalue of a symmetric matrix by cyclic Jacobi rotations.
    fn jacobi_max_eigenvalue(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        for _ in 0..100 {
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[k][p], a[k][q]);
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[p][k], a[q][k]);
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn smoothness_of_least_squares() {
        let stream = RngStream::new(31);
        let arch = Architecture::linear(3);
        let task = SyntheticTask::new(arch, 1.0, 0.1, &stream).unwrap();
        let clients = make_synthetic_federation(3, 40, &task, 1.0, &stream).unwrap();
        let exact = clients
            .iter()
            .map(|c| {
                let mut gram = vec![vec![0.0; 4]; 4];
                for i in 0..c.len() {
                    let x = [c.row(i)[0], c.row(i)[1], c.row(i)[2], 1.0];
                    for r in 0..4 {
                        for s in 0..4 {
                            gram[r][s] += 2.0 * x[r] * x[s] / c.len() as f64;
                        }
                    }
                }
                jacobi_max_eigenvalue(gram)
            })
            .fold(0.0, f64::max);
        let est = estimate_constants(&clients, &arch, &ModelVector::zeros(4), 8, 3, &stream).unwrap();
        assert!((est.smoothness - exact).abs() <= 0.1 * exact, "{} vs {exact}", est.smoothness);
    }

    #[test]
    fn full_batch_has_no_variance() {
        let stream = RngStream::new(2);
        let arch = Architecture::logistic(3, 2);
        let task = SyntheticTask::new(arch, 1.0, 1.0, &stream).unwrap();
        let clients = make_synthetic_federation(2, 20, &task, 0.5, &stream).unwrap();
        let est = estimate_constants(&clients, &arch, &ModelVector::zeros(arch.dim()), 20, 2, &stream).unwrap();
        assert!(est.zeta_sq < 1e-10);
        assert!(est.initial_gap > 0.0);
    }

    #[test]
    fn identical_clients_look_iid() {
        let stream = RngStream::new(4);
        let arch = Architecture::logistic(3, 3);
        let task = SyntheticTask::new(arch, 1.0, 1.0, &stream).unwrap();
        let one = task.client_dataset(0, 30, 0.0, &stream);
        let clients: Vec<ClientDataset> = (0..4)
            .map(|i| ClientDataset { client_id: i, ..one.clone() })
            .collect();
        assert!(matches!(clients[0].targets, Targets::Classes(_)));
        let est = estimate_constants(&clients, &arch, &ModelVector::zeros(arch.dim()), 10, 4, &stream).unwrap();
        assert!((est.gamma_sq - 1.0).abs() < 1e-9, "{}", est.gamma_sq);
        assert!(est.kappa_sq < 1e-10, "{}", est.kappa_sq);
        assert!(estimate_constants(&clients, &arch, &ModelVector::zeros(arch.dim()), 10, 1, &stream).is_err());
    }
}
