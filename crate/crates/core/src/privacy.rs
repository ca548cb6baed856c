//! Client-level differential privacy calculus.
//!
//! Accounting is per round. [`basic_composition`] is a reporting helper only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{clip_to_norm, gaussian_sample, ModelVector, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    /// Per-round ε. `f64::INFINITY` disables the privacy constraint.
    pub epsilon: f64,
    pub delta: f64,
    pub cohort: usize,
    pub population: usize,
}

impl PrivacySpec {
    /// δ defaults to 1/N.
    pub fn new(epsilon: f64, cohort: usize, population: usize) -> Result<Self> {
        let spec = PrivacySpec {
            epsilon,
            delta: 1.0 / population as f64,
            cohort,
            population,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config("privacy.epsilon must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("privacy.delta must lie in (0, 1)"));
        }
        if self.cohort == 0 || self.cohort > self.population {
            return Err(Error::config("cohort size r must satisfy 1 <= r <= N"));
        }
        Ok(())
    }

    pub fn is_unbounded(&self) -> bool {
        self.epsilon.is_infinite()
    }

    /// The per-round analysis assumes ε < 1; larger values are accepted but flagged.
    pub fn outside_proven_range(&self) -> bool {
        self.epsilon >= 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityContext {
    pub learning_rate: f64,
    pub steps: usize,
    pub clip_gradient: f64,
    pub beta: f64,
}

/// ℓ₂ sensitivity of the aligned, sparsified sum: `β · η · steps · C₁`.
pub fn sensitivity_bound(ctx: &SensitivityContext) -> f64 {
    ctx.beta * ctx.learning_rate * ctx.steps as f64 * ctx.clip_gradient
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCalibration {
    pub sigma: f64,
    /// Set when ε lies outside the classical (0, 1] range of the Gaussian mechanism.
    pub epsilon_above_one: bool,
}

/// Smallest σ for the classical Gaussian mechanism: `ψ √(2 ln(1.25/δ)) / ε`.
pub fn gaussian_sigma(sensitivity: f64, epsilon: f64, delta: f64) -> Result<NoiseCalibration> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(epsilon > 0.0) {
        return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
    }
    if !(sensitivity >= 0.0) {
        return Err(Error::domain("sensitivity must be nonnegative"));
    }
    Ok(NoiseCalibration {
        sigma: sensitivity * (2.0 * (1.25 / delta).ln()).sqrt() / epsilon,
        epsilon_above_one: epsilon > 1.0,
    })
}

/// Amplification by uniform subsampling of `n` out of `m`:
/// `(ln(1 + n(e^ε − 1)/m), nδ/m)`.
pub fn amplify_by_subsampling(epsilon: f64, delta: f64, n: usize, m: usize) -> Result<(f64, f64)> {
    if n > m || m == 0 {
        return Err(Error::domain(format!("subsample size {n} exceeds population {m}")));
    }
    let q = n as f64 / m as f64;
    Ok(((q * epsilon.exp_m1()).ln_1p(), q * delta))
}

/// Per-round feasibility constant
/// `C₂ = 2√2 η·steps·C₁ r √ln(1.25r/(Nδ)) / (N σ₀)`.
pub fn pfels_c2(
    learning_rate: f64,
    steps: usize,
    clip_gradient: f64,
    cohort: usize,
    population: usize,
    delta: f64,
    noise_std: f64,
) -> Result<f64> {
    if !(noise_std > 0.0) {
        return Err(Error::Infeasible(
            "channel noise is zero, so the round has no intrinsic privacy".into(),
        ));
    }
    let (r, n) = (cohort as f64, population as f64);
    let arg = 1.25 * r / (n * delta);
    if !(arg > 1.0) {
        return Err(Error::domain(format!(
            "1.25 r / (N δ) = {arg} must exceed 1 for the constant to be defined"
        )));
    }
    Ok(2.0 * std::f64::consts::SQRT_2 * learning_rate * steps as f64 * clip_gradient * r * arg.ln().sqrt()
        / (n * noise_std))
}

/// `C₂ β ≤ ε`.
pub fn pfels_round_is_private(beta: f64, c2: f64, epsilon: f64) -> bool {
    if epsilon.is_infinite() {
        return true;
    }
    c2 * beta <= epsilon
}

/// Largest β the privacy constraint allows: `ε / C₂`, or +∞ when ε is unbounded.
pub fn privacy_cap(epsilon: f64, c2: f64) -> f64 {
    if epsilon.is_infinite() {
        f64::INFINITY
    } else {
        // largest float with c2 * beta <= epsilon after rounding
        let mut beta = epsilon / c2;
        while c2 * beta > epsilon {
            beta = beta.next_down();
        }
        beta
    }
}

/// Device-side DP-FedAvg perturbation: clip to `C`, add `N(0, C²σ²/r · I)`.
pub fn dpfedavg_perturb(
    delta: &ModelVector,
    clip: f64,
    noise_multiplier: f64,
    cohort: usize,
    stream: &RngStream,
) -> Result<ModelVector> {
    if !(noise_multiplier >= 0.0) {
        return Err(Error::config("dp_fedavg.noise_multiplier must be nonnegative"));
    }
    if cohort == 0 {
        return Err(Error::config("cohort must be positive"));
    }
    let mut out = clip_to_norm(delta, clip)?;
    let std = clip * noise_multiplier / (cohort as f64).sqrt();
    out.add_assign(&gaussian_sample(stream, delta.len(), std));
    Ok(out)
}

/// Basic composition over `rounds` rounds: `(T ε, T δ)`.
///
/// Not a tight accountant; reported only for orientation.
pub fn basic_composition(epsilon: f64, delta: f64, rounds: usize) -> (f64, f64) {
    (epsilon * rounds as f64, (delta * rounds as f64).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensitivity_examples() {
        let ctx = SensitivityContext {
            learning_rate: 0.1,
            steps: 5,
            clip_gradient: 1.0,
            beta: 2.0,
        };
        assert!((sensitivity_bound(&ctx) - 1.0).abs() < 1e-15);
        assert_eq!(sensitivity_bound(&SensitivityContext { beta: 0.0, ..ctx }), 0.0);
    }

    #[test]
    fn gaussian_sigma_examples() {
        // sqrt(2 ln 125000) to 30 digits
        let s = gaussian_sigma(1.0, 1.0, 1e-5).unwrap();
        assert!((s.sigma - 4.844_805_262_605_389).abs() < 1e-12);
        assert!(!s.epsilon_above_one);
        assert_eq!(gaussian_sigma(0.0, 1.0, 1e-5).unwrap().sigma, 0.0);
        let two = gaussian_sigma(2.0, 0.7, 1e-3).unwrap().sigma;
        let one = gaussian_sigma(1.0, 0.7, 1e-3).unwrap().sigma;
        assert!((two - 2.0 * one).abs() < 1e-12);
        assert!(gaussian_sigma(1.0, 3.0, 1e-3).unwrap().epsilon_above_one);
        assert!(matches!(gaussian_sigma(1.0, 1.0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(gaussian_sigma(1.0, 1.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn amplification_examples() {
        let (e, d) = amplify_by_subsampling(0.8, 1e-4, 50, 50).unwrap();
        assert!((e - 0.8).abs() < 1e-15 && (d - 1e-4).abs() < 1e-19);
        // ln(1 + 0.1 (e - 1)) to 30 digits
        let (e, _) = amplify_by_subsampling(1.0, 1e-5, 10, 100).unwrap();
        assert!((e - 0.158_565_078_740_429_1).abs() < 1e-12);
        let (tiny, _) = amplify_by_subsampling(1e-12, 1e-5, 3, 10).unwrap();
        assert!(tiny < 1e-12);
        assert!(matches!(amplify_by_subsampling(1.0, 1e-5, 11, 10), Err(Error::Domain(_))));
    }

    #[test]
    fn amplification_never_increases_epsilon() {
        for n in 1..=40 {
            for eps in [0.01, 0.3, 1.0, 2.5, 9.0] {
                let (e, _) = amplify_by_subsampling(eps, 1e-3, n, 40).unwrap();
                assert!(e <= eps + 1e-15);
            }
        }
    }

    #[test]
    fn c2_examples() {
        let c2 = pfels_c2(0.1, 5, 1.0, 32, 1000, 0.001, 1.0).unwrap();
        // 2√2 · 0.5 · 32 · √ln 40 / 1000 to 30 digits
        assert!((c2 - 0.086_918_497_007_399_65).abs() < 1e-14);
        let c2_eta = pfels_c2(0.3, 5, 1.0, 32, 1000, 0.001, 1.0).unwrap();
        assert!((c2_eta - 3.0 * c2).abs() < 1e-14);
        let c2_noise = pfels_c2(0.1, 5, 1.0, 32, 1000, 0.001, 2.0).unwrap();
        assert!((c2_noise - c2 / 2.0).abs() < 1e-15);
        assert!(matches!(pfels_c2(0.1, 5, 1.0, 32, 1000, 0.001, 0.0), Err(Error::Infeasible(_))));
        // 1.25 · 1 / (1000 · 0.01) < 1
        assert!(matches!(pfels_c2(0.1, 5, 1.0, 1, 1000, 0.01, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn c2_monotonicity() {
        let base = pfels_c2(0.1, 5, 1.0, 32, 1000, 0.001, 1.0).unwrap();
        assert!(pfels_c2(0.2, 5, 1.0, 32, 1000, 0.001, 1.0).unwrap() > base);
        assert!(pfels_c2(0.1, 6, 1.0, 32, 1000, 0.001, 1.0).unwrap() > base);
        assert!(pfels_c2(0.1, 5, 1.5, 32, 1000, 0.001, 1.0).unwrap() > base);
        assert!(pfels_c2(0.1, 5, 1.0, 40, 1000, 0.001, 1.0).unwrap() > base);
        assert!(pfels_c2(0.1, 5, 1.0, 32, 1000, 0.001, 1.1).unwrap() < base);
        assert!(pfels_c2(0.1, 5, 1.0, 32, 2000, 0.001, 1.0).unwrap() < base);
        // δ = 1/N: numerically decreasing in N as well
        let mut prev = f64::INFINITY;
        for n in [100usize, 200, 500, 1000, 5000, 20000] {
            let c = pfels_c2(0.1, 5, 1.0, 32, n, 1.0 / n as f64, 1.0).unwrap();
            assert!(c < prev);
            prev = c;
        }
    }

    #[test]
    fn feasibility_boundary() {
        let c2 = 0.086_918_497_007_399_65;
        let eps = 1.5;
        assert!(pfels_round_is_private(eps / c2, c2, eps));
        assert!(!pfels_round_is_private(eps / c2 * (1.0 + 1e-9), c2, eps));
        assert!(pfels_round_is_private(10.0, c2, eps));
        assert!(pfels_round_is_private(1e300, c2, f64::INFINITY));
    }

    #[test]
    fn per_round_inequality_chain() {
        // log(1 + q(e^x − 1)) < 2 q x on (0, 1)
        for qi in 1..=100 {
            let q = qi as f64 / 100.0;
            for xi in 1..1000 {
                let x = xi as f64 / 1000.0;
                assert!((q * x.exp_m1()).ln_1p() < 2.0 * q * x, "q={q} x={x}");
            }
        }
    }

    #[test]
    fn perturb_examples() {
        let delta = ModelVector::from(vec![3.0, 4.0]);
        let s = RngStream::new(1);
        let clipped = dpfedavg_perturb(&delta, 1.0, 0.0, 4, &s).unwrap();
        assert!((clipped[0] - 0.6).abs() < 1e-15);
        let noise = dpfedavg_perturb(&ModelVector::zeros(200_000), 2.0, 1.5, 9, &s).unwrap();
        let var = noise.norm_squared() / noise.len() as f64;
        let expected = 4.0 * 2.25 / 9.0;
        assert!((var / expected - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn spec_validation() {
        assert!(PrivacySpec::new(1.0, 32, 1000).is_ok());
        assert_eq!(PrivacySpec::new(1.0, 32, 1000).unwrap().delta, 0.001);
        assert!(PrivacySpec::new(1.0, 33, 32).is_err());
        assert!(PrivacySpec::new(0.0, 3, 32).is_err());
        assert!(PrivacySpec::new(2.0, 3, 32).unwrap().outside_proven_range());
        assert_eq!(basic_composition(0.5, 1e-3, 10), (5.0, 1e-2));
    }

    proptest::proptest! {
        #[test]
        fn privacy_cap_never_overshoots(eps in 1e-6f64..10.0, c2 in 1e-6f64..10.0) {
            let cap = privacy_cap(eps, c2);
            proptest::prop_assert!(pfels_round_is_private(cap, c2, eps));
            proptest::prop_assert!(cap >= eps / c2 * (1.0 - 1e-15));
        }
    }
}
