//! Power alignment: the β that maximizes the received signal scale subject to
//! per-device power budgets and the per-round privacy constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ModelVector, RngStream};
use crate::privacy::privacy_cap;
use crate::sparsifier::{for_each_subset, generate_projection, project, MAX_ENUMERATION_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    PowerLimited,
    PrivacyLimited,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::PowerLimited => "power_limited",
            Regime::PrivacyLimited => "privacy_limited",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerDecision {
    pub beta: f64,
    /// α_i = β / |h_i|, so that every device arrives with the same scale.
    pub alphas: Vec<f64>,
    pub budgets: Vec<f64>,
    pub regime: Regime,
}

/// Per-round inputs shared by every power rule.
#[derive(Debug, Clone, Copy)]
pub struct PowerInputs<'a> {
    pub gains: &'a [f64],
    pub budgets: &'a [f64],
    pub d: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub clip_gradient: f64,
}

impl PowerInputs<'_> {
    fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(Error::config("power control needs a nonempty cohort"));
        }
        if self.gains.len() != self.budgets.len() {
            return Err(Error::Dimension {
                expected: self.gains.len(),
                got: self.budgets.len(),
            });
        }
        if self.gains.iter().chain(self.budgets).any(|&x| !(x > 0.0)) {
            return Err(Error::domain("gains and power budgets must be positive"));
        }
        if self.k == 0 || self.k > self.d {
            return Err(Error::config(format!("need 1 <= k <= d, got k = {}, d = {}", self.k, self.d)));
        }
        Ok(())
    }

    /// Worst-case update norm η · steps · C₁.
    fn update_bound(&self) -> f64 {
        self.learning_rate * self.steps as f64 * self.clip_gradient
    }
}

/// `min_i |h_i| √(d P_i) / (C₁ η steps √k)`, the largest β meeting every
/// device's expected-power budget under the Rand-k energy bound.
pub fn beta_power_cap(inputs: &PowerInputs<'_>) -> Result<f64> {
    inputs.validate()?;
    let scale = (inputs.d as f64 / inputs.k as f64).sqrt() / inputs.update_bound();
    Ok(inputs
        .gains
        .iter()
        .zip(inputs.budgets)
        .map(|(h, p)| h * p.sqrt() * scale)
        .fold(f64::INFINITY, f64::min))
}

fn decide(inputs: &PowerInputs<'_>, cap: f64, privacy: f64) -> Result<PowerDecision> {
    let (beta, regime) = if cap <= privacy {
        (cap, Regime::PowerLimited)
    } else {
        (privacy, Regime::PrivacyLimited)
    };
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!("alignment coefficient {beta} is not a positive finite number")));
    }
    Ok(PowerDecision {
        beta,
        alphas: inputs.gains.iter().map(|h| beta / h).collect(),
        budgets: inputs.budgets.to_vec(),
        regime,
    })
}

/// Closed-form optimum `β* = min(power cap, ε / C₂)`. Ties count as power-limited.
pub fn beta_pfels(inputs: &PowerInputs<'_>, epsilon: f64, c2: f64) -> Result<PowerDecision> {
    if !(c2 > 0.0) {
        return Err(Error::domain("C2 must be positive"));
    }
    let cap = beta_power_cap(inputs)?;
    decide(inputs, cap, privacy_cap(epsilon, c2))
}

/// Full-dimension transmission without a privacy constraint.
pub fn beta_wflp(inputs: &PowerInputs<'_>) -> Result<PowerDecision> {
    let full = PowerInputs { k: inputs.d, ..*inputs };
    let cap = beta_power_cap(&full)?;
    decide(&full, cap, f64::INFINITY)
}

/// Full-dimension transmission with the per-round privacy constraint.
pub fn beta_wflpdp(inputs: &PowerInputs<'_>, epsilon: f64, c2_full: f64) -> Result<PowerDecision> {
    let full = PowerInputs { k: inputs.d, ..*inputs };
    beta_pfels(&full, epsilon, c2_full)
}

/// One round of the power-control problem, stated as raw constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConstraints {
    pub gains: Vec<f64>,
    pub budgets: Vec<f64>,
    pub d: usize,
    pub k: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub clip_gradient: f64,
    pub epsilon: f64,
    pub c2: f64,
}

impl RoundConstraints {
    pub fn inputs(&self) -> PowerInputs<'_> {
        PowerInputs {
            gains: &self.gains,
            budgets: &self.budgets,
            d: self.d,
            k: self.k,
            learning_rate: self.learning_rate,
            steps: self.steps,
            clip_gradient: self.clip_gradient,
        }
    }

    /// Checks both constraint families for a candidate β directly.
    pub fn is_feasible(&self, beta: f64) -> bool {
        if !(beta > 0.0) || self.c2 * beta > self.epsilon {
            return false;
        }
        let energy_per_unit = (self.k as f64 / self.d as f64)
            * (self.learning_rate * self.steps as f64 * self.clip_gradient).powi(2);
        self.gains
            .iter()
            .zip(&self.budgets)
            .all(|(h, p)| (beta / h).powi(2) * energy_per_unit <= *p)
    }
}

/// Sum of `1/β²` over rounds.
pub fn p2_objective(betas: &[f64]) -> f64 {
    betas.iter().map(|b| 1.0 / (b * b)).sum()
}

/// Grid search for the largest feasible β in each round.
///
/// Starting from `upper` (the privacy limit `ε/C₂`, or one device's power
/// limit when ε is unbounded) the search halves until it finds a feasible
/// point `b`, then scans `[b, 2b]` on a uniform grid of step
/// `grid_resolution · b`. Feasibility is checked constraint by constraint.
pub fn p2_bruteforce_oracle(rounds: &[RoundConstraints], grid_resolution: f64) -> Result<Vec<f64>> {
    if !(grid_resolution > 0.0 && grid_resolution < 1.0) {
        return Err(Error::config("grid_resolution must lie in (0, 1)"));
    }
    rounds
        .iter()
        .map(|round| {
            if !(round.epsilon > 0.0) {
                return Err(Error::domain("epsilon must be positive"));
            }
            round.inputs().validate()?;
            let upper = if round.epsilon.is_finite() {
                privacy_cap(round.epsilon, round.c2)
            } else {
                let single = PowerInputs {
                    gains: &round.gains[..1],
                    budgets: &round.budgets[..1],
                    ..round.inputs()
                };
                beta_power_cap(&single)?
            };
            if round.is_feasible(upper) {
                return Ok(upper);
            }
            let mut low = upper;
            while !round.is_feasible(low) {
                low *= 0.5;
                if low < f64::MIN_POSITIVE {
                    return Err(Error::Infeasible("no feasible grid point".into()));
                }
            }
            let step = grid_resolution * low;
            let points = (low / step).ceil() as usize;
            Ok((0..=points)
                .rev()
                .map(|j| low + j as f64 * step)
                .find(|&b| round.is_feasible(b))
                .unwrap_or(low))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyCheck {
    /// Estimate of E‖AΔ‖² over random index sets.
    pub mean: f64,
    pub std_err: f64,
    /// (k/d)(η · steps · C₁)².
    pub bound: f64,
    pub exhaustive: bool,
    pub passed: bool,
}

/// Estimates `E‖AΔ‖²` exhaustively (d ≤ 12) or by Monte Carlo and compares it
/// with `(k/d)(η·steps·C₁)²`, allowing three standard errors.
pub fn rand_k_energy_check(
    delta: &ModelVector,
    k: usize,
    learning_rate: f64,
    steps: usize,
    clip_gradient: f64,
    trials: usize,
    stream: &RngStream,
) -> Result<EnergyCheck> {
    let d = delta.len();
    let norm_bound = learning_rate * steps as f64 * clip_gradient;
    if delta.norm() > norm_bound {
        return Err(Error::domain(format!(
            "update norm {} exceeds eta*steps*C1 = {norm_bound}",
            delta.norm()
        )));
    }
    if k == 0 || k > d {
        return Err(Error::config("need 1 <= k <= d"));
    }
    let bound = k as f64 / d as f64 * norm_bound * norm_bound;
    let (mean, std_err, exhaustive) = if d <= MAX_ENUMERATION_DIM {
        let (mut sum, mut count) = (0.0, 0usize);
        for_each_subset(d, k, |omega| {
            sum += omega.iter().map(|&i| delta[i] * delta[i]).sum::<f64>();
            count += 1;
        });
        (sum / count as f64, 0.0, true)
    } else {
        if trials < 2 {
            return Err(Error::config("Monte-Carlo check needs at least two trials"));
        }
        let samples: Vec<f64> = (0..trials)
            .map(|t| {
                let p = generate_projection(d, k, &stream.child(t as u64))?;
                Ok(project(&p, delta)?.norm_squared())
            })
            .collect::<Result<_>>()?;
        let (mean, se) = mean_and_std_err(&samples);
        (mean, se, false)
    };
    Ok(EnergyCheck {
        mean,
        std_err,
        bound,
        exhaustive,
        passed: mean <= bound + 3.0 * std_err,
    })
}

pub fn mean_and_std_err(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::privacy::pfels_round_is_private;
    use proptest::prelude::*;

    const C2: f64 = 0.086_918_497_007_399_65;

    fn inputs<'a>(gains: &'a [f64], budgets: &'a [f64], k: usize) -> PowerInputs<'a> {
        PowerInputs {
            gains,
            budgets,
            d: 100,
            k,
            learning_rate: 0.1,
            steps: 5,
            clip_gradient: 1.0,
        }
    }

    #[test]
    fn power_cap_examples() {
        let gains = [0.02; 4];
        let budgets = [10.0; 4];
        let cap = beta_power_cap(&inputs(&gains, &budgets, 25)).unwrap();
        // 0.02 √1000 / 2.5
        assert!((cap - 0.252_982_212_813_470_35).abs() < 1e-14);
        let full = beta_power_cap(&inputs(&gains, &budgets, 100)).unwrap();
        assert!((full - 0.02 * 10f64.sqrt() / 0.5).abs() < 1e-14);
        let halved = beta_power_cap(&inputs(&[0.02, 0.01, 0.02, 0.02], &budgets, 25)).unwrap();
        assert!((halved - cap / 2.0).abs() < 1e-14);
        assert!(beta_power_cap(&inputs(&[], &[], 25)).is_err());
    }

    #[test]
    fn pfels_decision_examples() {
        let gains = [0.02; 4];
        let budgets = [10.0; 4];
        let dec = beta_pfels(&inputs(&gains, &budgets, 25), 1.0, C2).unwrap();
        assert!((dec.beta - 0.252_982_212_813_470_35).abs() < 1e-14);
        assert_eq!(dec.regime, Regime::PowerLimited);
        assert!(pfels_round_is_private(dec.beta, C2, 1.0));
        for (a, h) in dec.alphas.iter().zip(gains) {
            assert!((a * h - dec.beta).abs() < 1e-15);
        }
        let tiny = beta_pfels(&inputs(&gains, &budgets, 25), 1e-9, C2).unwrap();
        assert_eq!(tiny.regime, Regime::PrivacyLimited);
        assert!(tiny.beta < 1e-7);
    }

    #[test]
    fn baseline_examples() {
        let wflp = beta_wflp(&PowerInputs {
            gains: &[0.1],
            budgets: &[100.0],
            d: 10,
            k: 3,
            learning_rate: 0.1,
            steps: 5,
            clip_gradient: 1.0,
        })
        .unwrap();
        assert!((wflp.beta - 2.0).abs() < 1e-14);
        let gains = [0.03, 0.01];
        let budgets = [5.0, 50.0];
        let base = inputs(&gains, &budgets, 7);
        let cap_full = beta_power_cap(&PowerInputs { k: 100, ..base }).unwrap();
        assert_eq!(beta_wflp(&base).unwrap().beta, cap_full);
        assert_eq!(beta_wflpdp(&base, 1e6, C2).unwrap().beta, cap_full);
        assert!(beta_wflpdp(&base, 1e-9, C2).unwrap().beta < 1e-7);
        for eps in [0.01, 0.1, 1.0, 10.0] {
            assert!(beta_wflpdp(&base, eps, C2).unwrap().beta <= beta_wflp(&base).unwrap().beta);
        }
    }

    #[test]
    fn regime_flips_at_boundary() {
        let gains = [0.02, 0.05];
        let budgets = [10.0, 3.0];
        let inp = inputs(&gains, &budgets, 30);
        let cap = beta_power_cap(&inp).unwrap();
        let eps_star = C2 * cap;
        assert_eq!(beta_pfels(&inp, eps_star * (1.0 + 1e-9), C2).unwrap().regime, Regime::PowerLimited);
        assert_eq!(beta_pfels(&inp, eps_star * (1.0 - 1e-9), C2).unwrap().regime, Regime::PrivacyLimited);
    }

    #[test]
    fn oracle_rejects_nonpositive_epsilon() {
        let round = RoundConstraints {
            gains: vec![0.02],
            budgets: vec![10.0],
            d: 100,
            k: 10,
            learning_rate: 0.1,
            steps: 5,
            clip_gradient: 1.0,
            epsilon: 0.0,
            c2: C2,
        };
        assert!(p2_bruteforce_oracle(&[round], 1e-3).is_err());
    }

    #[test]
    fn rand_k_energy_exhaustive_equality() {
        let delta = ModelVector::from(vec![0.1, -0.2, 0.05, 0.3]);
        let check = rand_k_energy_check(&delta, 2, 0.1, 5, 1.0, 0, &RngStream::new(0)).unwrap();
        assert!(check.exhaustive && check.passed);
        assert!((check.mean - 0.5 * delta.norm_squared()).abs() < 1e-12);
        let zero = rand_k_energy_check(&ModelVector::zeros(30), 4, 0.1, 5, 1.0, 200, &RngStream::new(0)).unwrap();
        assert_eq!(zero.mean, 0.0);
        assert!(zero.passed);
        let big = ModelVector::from(vec![10.0, 0.0]);
        assert!(rand_k_energy_check(&big, 1, 0.1, 5, 1.0, 10, &RngStream::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn oracle_agrees_with_closed_form(
            gains in prop::collection::vec(0.0001f64..0.1, 1..8),
            budget_scale in 1.0f64..100.0,
            k in 1usize..=50,
            eps in 0.05f64..10.0,
            sigma0 in 0.1f64..3.0,
        ) {
            let budgets: Vec<f64> = gains.iter().enumerate().map(|(i, _)| budget_scale * (1.0 + i as f64)).collect();
            let c2 = C2 / sigma0;
            let round = RoundConstraints {
                gains: gains.clone(), budgets, d: 50, k,
                learning_rate: 0.1, steps: 5, clip_gradient: 1.0, epsilon: eps, c2,
            };
            let closed = beta_pfels(&round.inputs(), eps, c2).unwrap().beta;
            let grid = p2_bruteforce_oracle(std::slice::from_ref(&round), 1e-3).unwrap()[0];
            prop_assert!(grid <= closed * (1.0 + 1e-12));
            prop_assert!(closed - grid <= 1e-3 * closed);
        }

        #[test]
        fn beta_monotone(
            eps in 0.05f64..5.0,
            scale in 1.0f64..2.0,
            k in 1usize..50,
        ) {
            let gains = [0.01, 0.03, 0.02];
            let budgets = [5.0, 10.0, 2.0];
            let base = PowerInputs { gains: &gains, budgets: &budgets, d: 50, k, learning_rate: 0.1, steps: 5, clip_gradient: 1.0 };
            let b = beta_pfels(&base, eps, C2).unwrap().beta;
            prop_assert!(beta_pfels(&base, eps * scale, C2).unwrap().beta >= b);
            let more: Vec<f64> = budgets.iter().map(|p| p * scale).collect();
            let richer = PowerInputs { budgets: &more, ..base };
            prop_assert!(beta_pfels(&richer, eps, C2).unwrap().beta >= b);
            let denser = PowerInputs { k: k + 1, ..base };
            prop_assert!(beta_pfels(&denser, eps, C2).unwrap().beta <= b);
            prop_assert!(beta_pfels(&base, eps, C2 * scale).unwrap().beta <= b);
        }
    }
}
