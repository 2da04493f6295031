use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Donor weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

/// Entries above this negative slack are treated as rounding noise and clamped.
pub const NEGATIVE_SLACK: f64 = 1e-10;
pub const SUM_TOL: f64 = 1e-8;

impl WeightVector {
    /// Validates simplex membership, clamping tiny negatives to zero.
    pub fn new(mut w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Domain("weight vector is empty".into()));
        }
        if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(**v >= -NEGATIVE_SLACK)) {
            return Err(Error::Domain(format!("weight {i} is {v}, below zero")));
        }
        for v in &mut w {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::Domain(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector(w))
    }

    pub fn uniform(j: usize) -> Self {
        WeightVector(alloc::vec![1.0 / j as f64; j])
    }

    /// Clamps negatives and rescales to unit sum. Used on solver output.
    pub(crate) fn from_iterate(mut w: Vec<f64>) -> Self {
        for v in &mut w {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let sum: f64 = w.iter().sum();
        if sum > 0.0 && sum != 1.0 {
            for v in &mut w {
                *v /= sum;
            }
        }
        WeightVector(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl core::ops::Deref for WeightVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` by sorting.
/// `scratch` must have the same length as `v`.
pub(crate) fn project_simplex(v: &mut [f64], scratch: &mut [f64]) {
    scratch.copy_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn proj(v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        let mut s = vec![0.0; v.len()];
        project_simplex(&mut out, &mut s);
        out
    }

    #[test]
    fn projection_fixes_simplex_points() {
        let p = [0.2, 0.3, 0.5];
        let out = proj(&p);
        for (a, b) in out.iter().zip(p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_known_values() {
        assert_eq!(proj(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(proj(&[0.0, 0.0]), vec![0.5, 0.5]);
        let out = proj(&[1.0, 1.0, -5.0]);
        assert_eq!(out, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn shift_invariance() {
        let a = proj(&[0.3, -1.2, 2.0, 0.9]);
        let b = proj(&[10.3, 8.8, 12.0, 10.9]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn weight_vector_invariants() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        let w = WeightVector::new(vec![-1e-12, 1.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 1.0]);
        assert!(WeightVector::new(vec![-0.1, 1.1]).is_err());
        assert!(WeightVector::new(vec![0.4, 0.4]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }
}
