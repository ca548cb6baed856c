//! Rand-k coordinate selection shared between server and clients by seed.
//!
//! The k×d selection matrix is represented only by its sorted index set.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ModelVector, RngStream};

/// Largest dimension the exhaustive oracles will enumerate.
pub const MAX_ENUMERATION_DIM: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandKProjection {
    d: usize,
    omega: Vec<usize>,
}

impl RandKProjection {
    /// Builds a projection from an explicit index set.
    pub fn from_indices(d: usize, mut omega: Vec<usize>) -> Result<Self> {
        omega.sort_unstable();
        omega.dedup();
        if omega.is_empty() || omega.len() > d || omega.last().is_some_and(|&i| i >= d) {
            return Err(Error::config(format!("invalid Rand-k index set for d = {d}")));
        }
        Ok(RandKProjection { d, omega })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    /// Compression ratio k/d.
    pub fn ratio(&self) -> f64 {
        self.k() as f64 / self.d as f64
    }

    /// λ_k = 1 − k/d.
    pub fn lambda(&self) -> f64 {
        1.0 - self.ratio()
    }
}

fn check_kd(d: usize, k: usize) -> Result<()> {
    if k < 1 || k > d {
        return Err(Error::config(format!("Rand-k requires 1 <= k <= d, got k = {k}, d = {d}")));
    }
    Ok(())
}

/// Uniform k-subset of `0..d` by partial Fisher–Yates.
pub fn generate_projection(d: usize, k: usize, stream: &RngStream) -> Result<RandKProjection> {
    check_kd(d, k)?;
    let mut pool: Vec<usize> = (0..d).collect();
    let mut rng = stream.rng();
    let (chosen, _) = pool.partial_shuffle(&mut rng, k);
    let mut omega = chosen.to_vec();
    omega.sort_unstable();
    Ok(RandKProjection { d, omega })
}

/// `A v`: keeps the coordinates in omega.
pub fn project(proj: &RandKProjection, v: &ModelVector) -> Result<ModelVector> {
    v.check_len(proj.d)?;
    Ok(ModelVector::from(proj.omega.iter().map(|&i| v[i]).collect::<Vec<_>>()))
}

/// `Aᵀ w`: scatters `w` back to positions omega, zeros elsewhere.
pub fn embed_transpose(proj: &RandKProjection, w: &ModelVector) -> Result<ModelVector> {
    w.check_len(proj.k())?;
    let mut out = ModelVector::zeros(proj.d);
    for (&i, &x) in proj.omega.iter().zip(w.iter()) {
        out[i] = x;
    }
    Ok(out)
}

/// Visits every k-subset of `0..d` in lexicographic order.
pub fn for_each_subset(d: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k == 0 || k > d {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        visit(&idx);
        let mut i = k;
        while i > 0 && idx[i - 1] == d - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn enumeration_guard(d: usize, k: usize, v: &ModelVector) -> Result<()> {
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::Guard(format!(
            "d = {d} exceeds the enumeration limit {MAX_ENUMERATION_DIM}"
        )));
    }
    check_kd(d, k)?;
    v.check_len(d)
}

/// Exact average of `Aᵀ A v` over all C(d, k) index sets.
pub fn expected_reconstruction_oracle(d: usize, k: usize, v: &ModelVector) -> Result<ModelVector> {
    enumeration_guard(d, k, v)?;
    let mut sum = vec![0.0; d];
    let mut count = 0usize;
    for_each_subset(d, k, |omega| {
        for &i in omega {
            sum[i] += v[i];
        }
        count += 1;
    });
    Ok(ModelVector::from(sum.into_iter().map(|s| s / count as f64).collect::<Vec<_>>()))
}

/// Exact `E‖Aᵀ A v − v‖²` over all C(d, k) index sets.
pub fn variance_oracle(d: usize, k: usize, v: &ModelVector) -> Result<f64> {
    enumeration_guard(d, k, v)?;
    let mut total = 0.0;
    let mut count = 0usize;
    let mut kept = vec![false; d];
    for_each_subset(d, k, |omega| {
        kept.iter_mut().for_each(|b| *b = false);
        for &i in omega {
            kept[i] = true;
        }
        total += (0..d).filter(|&i| !kept[i]).map(|i| v[i] * v[i]).sum::<f64>();
        count += 1;
    });
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn v(x: &[f64]) -> ModelVector {
        ModelVector::from(x.to_vec())
    }

    #[test]
    fn full_dimension_is_identity() {
        let p = generate_projection(3, 3, &RngStream::new(0)).unwrap();
        assert_eq!(p.omega(), &[0, 1, 2]);
        let x = v(&[1.0, -2.0, 3.0]);
        assert_eq!(project(&p, &x).unwrap(), x);
        assert_eq!(embed_transpose(&p, &x).unwrap(), x);
        assert_eq!(p.lambda(), 0.0);
    }

    #[test]
    fn bad_k_rejected() {
        assert!(matches!(generate_projection(4, 0, &RngStream::new(0)), Err(Error::Config(_))));
        assert!(matches!(generate_projection(4, 5, &RngStream::new(0)), Err(Error::Config(_))));
    }

    #[test]
    fn select_and_embed() {
        let p = RandKProjection::from_indices(4, vec![1, 0]).unwrap();
        assert_eq!(project(&p, &v(&[1.0, 2.0, 3.0, 4.0])).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(embed_transpose(&p, &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0, 0.0, 0.0]));
        assert_eq!(project(&p, &ModelVector::zeros(4)).unwrap(), ModelVector::zeros(2));
        assert!(matches!(project(&p, &ModelVector::zeros(3)), Err(Error::Dimension { .. })));
        assert!(matches!(embed_transpose(&p, &ModelVector::zeros(3)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn uniform_over_subsets() {
        let root = RngStream::new(2024);
        let draws = 60_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for t in 0..draws {
            let p = generate_projection(4, 2, &root.child(t)).unwrap();
            *counts.entry(p.omega().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        for (subset, c) in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 1.0 / 6.0).abs() < 0.01, "{subset:?}: {freq}");
        }
    }

    #[test]
    fn shared_seed_agreement() {
        let server = RngStream::new(7).derive(&[12, 2]);
        let client = RngStream::new(7).derive(&[12, 2]);
        assert_eq!(
            generate_projection(100, 10, &server).unwrap(),
            generate_projection(100, 10, &client).unwrap()
        );
    }

    #[test]
    fn oracle_examples() {
        let x = v(&[1.0, 2.0, 3.0, 4.0]);
        let mean = expected_reconstruction_oracle(4, 2, &x).unwrap();
        for (a, b) in mean.iter().zip([0.5, 1.0, 1.5, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(expected_reconstruction_oracle(4, 4, &x).unwrap(), x);
        assert!((variance_oracle(4, 2, &x).unwrap() - 15.0).abs() < 1e-12);
        assert_eq!(variance_oracle(4, 4, &x).unwrap(), 0.0);
        assert_eq!(variance_oracle(4, 1, &ModelVector::zeros(4)).unwrap(), 0.0);
        assert!(matches!(
            expected_reconstruction_oracle(13, 2, &ModelVector::zeros(13)),
            Err(Error::Guard(_))
        ));
    }

    #[test]
    fn subset_enumeration_counts() {
        for d in 1..=8usize {
            for k in 1..=d {
                let mut n = 0u64;
                for_each_subset(d, k, |_| n += 1);
                let binom = (0..k as u64).fold(1u64, |acc, i| acc * (d as u64 - i) / (i + 1));
                assert_eq!(n, binom, "C({d},{k})");
            }
        }
    }

    proptest! {
        #[test]
        fn project_is_linear(
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            u in prop::collection::vec(-10.0f64..10.0, 9),
            w in prop::collection::vec(-10.0f64..10.0, 9),
            seed in any::<u64>(), k in 1usize..=9,
        ) {
            let p = generate_projection(9, k, &RngStream::new(seed)).unwrap();
            let (u, w) = (ModelVector::from(u), ModelVector::from(w));
            let mut combo = u.scaled(a);
            combo.axpy(b, &w);
            let lhs = project(&p, &combo).unwrap();
            let mut rhs = project(&p, &u).unwrap().scaled(a);
            rhs.axpy(b, &project(&p, &w).unwrap());
            for (x, y) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn embedding_preserves_norm(w in prop::collection::vec(-10.0f64..10.0, 5), seed in any::<u64>()) {
            let p = generate_projection(11, 5, &RngStream::new(seed)).unwrap();
            let w = ModelVector::from(w);
            let e = embed_transpose(&p, &w).unwrap();
            prop_assert!((e.norm() - w.norm()).abs() < 1e-12);
            prop_assert_eq!(project(&p, &e).unwrap(), w);
        }
    }
}
