//! Flat-vector arithmetic, clipping and hierarchical deterministic randomness.
//!
//! Every stochastic draw in the simulator comes from an [`RngStream`] whose
//! output is a pure function of `(master_seed, path)`. Streams are forked,
//! never shared, so clients can be evaluated in any order.

use std::ops::{Index, IndexMut};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat parameter / update / gradient vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    pub fn zeros(dim: usize) -> Self {
        ModelVector(vec![0.0; dim])
    }

    /// Wraps `values`, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::domain(format!("non-finite entry at index {pos}")));
        }
        Ok(ModelVector(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|x| x.is_finite()));
        ModelVector(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(self)
    }

    pub fn norm_squared(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn dot(&self, other: &ModelVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, factor: f64) -> ModelVector {
        ModelVector(self.0.iter().map(|x| x * factor).collect())
    }

    pub fn scale_in_place(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|x| *x *= factor);
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &ModelVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn add_assign(&mut self, other: &ModelVector) {
        self.axpy(1.0, other);
    }

    pub fn sub(&self, other: &ModelVector) -> ModelVector {
        ModelVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &ModelVector) -> ModelVector {
        ModelVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn check_len(&self, expected: usize) -> Result<()> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(Error::Dimension {
                expected,
                got: self.len(),
            })
        }
    }
}

impl From<Vec<f64>> for ModelVector {
    /// Panics in debug builds on non-finite input; use [`ModelVector::new`] for untrusted data.
    fn from(values: Vec<f64>) -> Self {
        ModelVector::from_vec_unchecked(values)
    }
}

impl Index<usize> for ModelVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ModelVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

pub fn l2_norm(v: &ModelVector) -> f64 {
    v.norm_squared().sqrt()
}

/// Scales `v` by `1 / max(1, ‖v‖/threshold)`.
///
/// The result never has a computed norm above `threshold`, so clipping an
/// already clipped vector returns it unchanged bit-for-bit.
pub fn clip_to_norm(v: &ModelVector, threshold: f64) -> Result<ModelVector> {
    if !(threshold > 0.0) {
        return Err(Error::config(format!(
            "clip threshold must be positive, got {threshold}"
        )));
    }
    let norm = v.norm();
    if norm <= threshold {
        return Ok(v.clone());
    }
    let mut factor = threshold / norm;
    let mut out = v.scaled(factor);
    // rounding can leave the norm a few ulps above the threshold
    while out.norm() > threshold {
        factor *= 1.0 - f64::EPSILON;
        out = v.scaled(factor);
    }
    Ok(out)
}

/// Labels used as the last path component to separate draws of different kinds.
pub mod purpose {
    pub const COHORT: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const MINIBATCH: u64 = 3;
    pub const CHANNEL_GAIN: u64 = 4;
    pub const CHANNEL_NOISE: u64 = 5;
    pub const ARTIFICIAL_NOISE: u64 = 6;
    pub const DATA: u64 = 7;
    pub const MODEL_INIT: u64 = 8;
    pub const BUDGET: u64 = 9;
    pub const PROBE: u64 = 10;
}

/// A named position in the randomness hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        RngStream {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Forks a sub-stream one level deeper.
    pub fn child(&self, label: u64) -> RngStream {
        let mut path = self.path.clone();
        path.push(label);
        RngStream {
            master_seed: self.master_seed,
            path,
        }
    }

    pub fn derive(&self, labels: &[u64]) -> RngStream {
        let mut path = self.path.clone();
        path.extend_from_slice(labels);
        RngStream {
            master_seed: self.master_seed,
            path,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut state = splitmix64(self.master_seed ^ 0x5046_454c_5300_0000);
        for (depth, label) in self.path.iter().enumerate() {
            state = splitmix64(state ^ splitmix64(label.wrapping_add(depth as u64 + 1)));
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// I.i.d. `N(0, std²)` vector. `std == 0` yields exact zeros.
pub fn gaussian_sample(stream: &RngStream, dim: usize, std: f64) -> ModelVector {
    assert!(std >= 0.0, "standard deviation must be nonnegative");
    if std == 0.0 {
        return ModelVector::zeros(dim);
    }
    let mut rng = stream.rng();
    let values = (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * std
        })
        .collect();
    ModelVector(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norms() {
        assert_eq!(l2_norm(&ModelVector::from(vec![3.0, 4.0])), 5.0);
        assert_eq!(l2_norm(&ModelVector::zeros(7)), 0.0);
        assert_eq!(l2_norm(&ModelVector::from(vec![1.0; 4])), 2.0);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ModelVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ModelVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn clip_examples() {
        let v = ModelVector::from(vec![3.0, 4.0]);
        assert_eq!(clip_to_norm(&v, 10.0).unwrap(), v);
        let c = clip_to_norm(&v, 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        let z = ModelVector::zeros(2);
        assert_eq!(clip_to_norm(&z, 0.5).unwrap(), z);
        assert!(matches!(clip_to_norm(&v, 0.0), Err(Error::Config(_))));
        assert!(matches!(clip_to_norm(&v, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn gaussian_zero_std_and_determinism() {
        let s = RngStream::new(42).derive(&[1, 2, 3]);
        assert_eq!(gaussian_sample(&s, 5, 0.0), ModelVector::zeros(5));
        assert_eq!(gaussian_sample(&s, 16, 1.0), gaussian_sample(&s, 16, 1.0));
        assert_ne!(
            gaussian_sample(&s, 16, 1.0),
            gaussian_sample(&s.child(0), 16, 1.0)
        );
    }

    #[test]
    fn gaussian_moments() {
        let v = gaussian_sample(&RngStream::new(3).child(9), 100_000, 1.0);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn stream_paths_differ() {
        use rand::Rng;
        let a: u64 = RngStream::new(1).derive(&[1, 2]).rng().random();
        let b: u64 = RngStream::new(1).derive(&[2, 1]).rng().random();
        let c: u64 = RngStream::new(2).derive(&[1, 2]).rng().random();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    proptest! {
        #[test]
        fn clip_is_bounded_and_idempotent(
            values in prop::collection::vec(-1e3f64..1e3, 1..40),
            threshold in 1e-3f64..1e2,
        ) {
            let v = ModelVector::from(values);
            let once = clip_to_norm(&v, threshold).unwrap();
            prop_assert!(once.norm() <= threshold);
            let twice = clip_to_norm(&once, threshold).unwrap();
            prop_assert_eq!(&once, &twice);
            // direction preserved
            let cos = once.dot(&v) / (once.norm() * v.norm()).max(f64::MIN_POSITIVE);
            prop_assert!(v.norm() == 0.0 || (cos - 1.0).abs() < 1e-12);
        }
    }
}
