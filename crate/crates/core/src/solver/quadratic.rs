use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Normalized squared error `(1/n) * ||target - donors^T w||^2`, with donors
/// stored one per row.
pub fn nse(target: &[f64], donors: &Matrix, w: &[f64]) -> Result<f64> {
    check_block(target, donors)?;
    if w.len() != donors.rows() {
        return Err(Error::Dimension(format!(
            "{} weights for {} donors",
            w.len(),
            donors.rows()
        )));
    }
    Ok(nse_unchecked(target, donors, w))
}

pub(crate) fn nse_unchecked(target: &[f64], donors: &Matrix, w: &[f64]) -> f64 {
    let n = target.len();
    let mut acc = 0.0;
    for c in 0..n {
        let mut fitted = 0.0;
        for (r, &wr) in w.iter().enumerate() {
            fitted += wr * donors.get(r, c);
        }
        let d = target[c] - fitted;
        acc += d * d;
    }
    acc / n as f64
}

pub(crate) fn check_block(target: &[f64], donors: &Matrix) -> Result<()> {
    if target.is_empty() {
        return Err(Error::Domain("NSE of an empty target vector".into()));
    }
    if donors.cols() != target.len() {
        return Err(Error::Dimension(format!(
            "target has {} entries but donor rows have {}",
            target.len(),
            donors.cols()
        )));
    }
    if donors.rows() == 0 {
        return Err(Error::Domain("no donors".into()));
    }
    Ok(())
}

/// NSE of one block as a pure quadratic on the simplex.
///
/// With `E_i = donor_i - target`, every simplex point satisfies
/// `target - donors^T w = -E^T w`, so `NSE(w) = w^T Q w` with `Q = E E^T / n`.
/// There is no linear or constant term, which keeps values near zero exact.
#[derive(Debug, Clone)]
pub(crate) struct Gram {
    j: usize,
    n: usize,
    e: Vec<f64>,
    q: Vec<f64>,
    lambda_max: f64,
}

impl Gram {
    pub fn new(target: &[f64], donors: &Matrix) -> Result<Gram> {
        check_block(target, donors)?;
        let j = donors.rows();
        let n = target.len();
        let mut e = vec![0.0; j * n];
        for r in 0..j {
            for c in 0..n {
                e[r * n + c] = donors.get(r, c) - target[c];
            }
        }
        let mut q = vec![0.0; j * j];
        let inv_n = 1.0 / n as f64;
        for a in 0..j {
            for b in a..j {
                let v = dot(&e[a * n..(a + 1) * n], &e[b * n..(b + 1) * n]) * inv_n;
                q[a * j + b] = v;
                q[b * j + a] = v;
            }
        }
        let lambda_max = power_iteration(&q, j);
        Ok(Gram {
            j,
            n,
            e,
            q,
            lambda_max,
        })
    }

    /// Weighted sum of blocks over the same donors. The eigenvalue bound is
    /// the weighted sum of the parts' bounds.
    pub fn combine(parts: &[(f64, &Gram)], j: usize) -> Gram {
        let mut q = vec![0.0; j * j];
        let mut lambda_max = 0.0;
        for (wt, g) in parts {
            if *wt == 0.0 {
                continue;
            }
            for (dst, src) in q.iter_mut().zip(&g.q) {
                *dst += wt * src;
            }
            lambda_max += wt * g.lambda_max;
        }
        Gram {
            j,
            n: usize::MAX,
            e: Vec::new(),
            q,
            lambda_max,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.j
    }

    #[inline]
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `out = Q w`, through the low-rank factor when that is cheaper.
    pub fn apply(&self, w: &[f64], out: &mut [f64], tmp: &mut Vec<f64>) {
        let j = self.j;
        if !self.e.is_empty() && 2 * self.n < j {
            let n = self.n;
            tmp.clear();
            tmp.resize(n, 0.0);
            for (r, &wr) in w.iter().enumerate() {
                if wr != 0.0 {
                    for (t, &ev) in tmp.iter_mut().zip(&self.e[r * n..(r + 1) * n]) {
                        *t += wr * ev;
                    }
                }
            }
            let inv_n = 1.0 / n as f64;
            for (r, o) in out.iter_mut().enumerate() {
                *o = dot(&self.e[r * n..(r + 1) * n], tmp) * inv_n;
            }
        } else {
            for (r, o) in out.iter_mut().enumerate() {
                *o = dot(&self.q[r * j..(r + 1) * j], w);
            }
        }
    }
}

/// Largest eigenvalue of a symmetric PSD matrix, from a fixed start vector.
fn power_iteration(q: &[f64], j: usize) -> f64 {
    let mut v: Vec<f64> = (0..j).map(|i| 1.0 + 0.01 * i as f64).collect();
    let mut next = vec![0.0; j];
    let mut est = 0.0;
    for _ in 0..60 {
        for (r, o) in next.iter_mut().enumerate() {
            *o = dot(&q[r * j..(r + 1) * j], &v);
        }
        let norm = libm::sqrt(dot(&next, &next));
        if norm == 0.0 {
            return 0.0;
        }
        let new_est = dot(&v, &next) / dot(&v, &v);
        for (a, b) in v.iter_mut().zip(&next) {
            *a = b / norm;
        }
        if (new_est - est).abs() <= 1e-6 * new_est.abs() {
            est = new_est;
            break;
        }
        est = new_est;
    }
    // Gershgorin row-sum bound caps the estimate from above.
    let gersh = (0..j)
        .map(|r| q[r * j..(r + 1) * j].iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    est.max(0.0).min(gersh)
}
