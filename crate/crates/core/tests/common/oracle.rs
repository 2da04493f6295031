//! Brute-force references used by the solver tests.

#![allow(dead_code)]

use panelfusion_core::solver::nse;
use panelfusion_core::Matrix;

/// Calls `f` on every point of the simplex grid with `1/step` divisions.
pub fn for_each_grid_point(j: usize, divisions: usize, mut f: impl FnMut(&[f64])) {
    let mut counts = vec![0usize; j];
    let mut w = vec![0.0; j];
    fn rec(pos: usize, left: usize, n: usize, counts: &mut [usize], w: &mut [f64], f: &mut dyn FnMut(&[f64])) {
        let j = counts.len();
        if pos == j - 1 {
            counts[pos] = left;
            for (wi, c) in w.iter_mut().zip(counts.iter()) {
                *wi = *c as f64 / n as f64;
            }
            f(w);
            return;
        }
        for c in 0..=left {
            counts[pos] = c;
            rec(pos + 1, left - c, n, counts, w, f);
        }
    }
    rec(0, divisions, divisions, &mut counts, &mut w, &mut f);
}

pub struct Block<'a> {
    pub target: &'a [f64],
    pub donors: &'a Matrix,
}

/// Smallest `sum_k weight_k NSE_k` over grid points with every constraint
/// `NSE(c) <= rhs` satisfied. `None` if no grid point is feasible.
pub fn grid_qcqp(
    objective: &[(f64, Block<'_>)],
    constraints: &[(Block<'_>, f64)],
    j: usize,
    divisions: usize,
) -> Option<(f64, Vec<f64>)> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_grid_point(j, divisions, |w| {
        for (b, rhs) in constraints {
            if nse(b.target, b.donors, w).unwrap() > *rhs {
                return;
            }
        }
        let v: f64 = objective.iter().map(|(wt, b)| wt * nse(b.target, b.donors, w).unwrap()).sum();
        if best.as_ref().map_or(true, |(bv, _)| v < *bv) {
            best = Some((v, w.to_vec()));
        }
    });
    best
}

/// Grid search followed by zoom levels: each level searches a finer grid
/// (step / 10) in a box of +-2 coarse steps around the incumbent, restricted
/// to the simplex. The last free coordinate is implied by the others.
pub fn refined_qcqp(
    objective: &[(f64, Block<'_>)],
    constraints: &[(Block<'_>, f64)],
    j: usize,
    divisions: usize,
    levels: usize,
) -> Option<(f64, Vec<f64>)> {
    let (mut best_v, mut best_w) = grid_qcqp(objective, constraints, j, divisions)?;
    let mut step = 1.0 / divisions as f64;
    let eval = |w: &[f64]| -> Option<f64> {
        for (b, rhs) in constraints {
            if nse(b.target, b.donors, w).unwrap() > *rhs {
                return None;
            }
        }
        Some(objective.iter().map(|(wt, b)| wt * nse(b.target, b.donors, w).unwrap()).sum())
    };
    for _ in 0..levels {
        let fine = step / 10.0;
        let center = best_w.clone();
        let mut offsets = vec![-20i64; j - 1];
        loop {
            let mut w = vec![0.0; j];
            let mut ok = true;
            for k in 0..j - 1 {
                w[k] = center[k] + offsets[k] as f64 * fine;
                if w[k] < 0.0 {
                    ok = false;
                }
            }
            let rest = 1.0 - w[..j - 1].iter().sum::<f64>();
            w[j - 1] = rest;
            if ok && rest >= 0.0 {
                if let Some(v) = eval(&w) {
                    if v < best_v {
                        best_v = v;
                        best_w = w;
                    }
                }
            }
            let mut k = 0;
            while k < j - 1 {
                offsets[k] += 1;
                if offsets[k] <= 20 {
                    break;
                }
                offsets[k] = -20;
                k += 1;
            }
            if k == j - 1 {
                break;
            }
        }
        step = fine;
    }
    Some((best_v, best_w))
}

/// Deterministic pseudo-random stream for test instances.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_f64() * n as f64) as usize % n
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| self.next_f64()).collect()).unwrap()
    }

    pub fn vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_f64()).collect()
    }
}

/// One random instance: an objective block, a constraint block and a rhs
/// strictly between the constraint's grid minimum and its value at the
/// objective's own optimum, so the constraint is usually active.
pub struct Instance {
    pub j: usize,
    pub obj_target: Vec<f64>,
    pub obj_donors: Matrix,
    pub con_target: Vec<f64>,
    pub con_donors: Matrix,
    pub rhs: f64,
}

pub fn random_instance(rng: &mut Lcg, divisions: usize) -> Instance {
    let j = 2 + rng.below(3);
    let d1 = 1 + rng.below(6);
    let d2 = 1 + rng.below(6);
    let obj_target = rng.vector(d1);
    let obj_donors = rng.matrix(j, d1);
    let con_target = rng.vector(d2);
    let con_donors = rng.matrix(j, d2);
    let ob = Block { target: &obj_target, donors: &obj_donors };
    let cb = Block { target: &con_target, donors: &con_donors };
    let (_, w_obj) = grid_qcqp(&[(1.0, ob)], &[], j, divisions).unwrap();
    let (c_min, _) = grid_qcqp(&[(1.0, Block { target: &con_target, donors: &con_donors })], &[], j, divisions).unwrap();
    let c_at = nse(cb.target, cb.donors, &w_obj).unwrap();
    let rhs = c_min + (0.2 + 0.6 * rng.next_f64()) * (c_at - c_min).max(0.0) + 1e-6;
    Instance {
        j,
        obj_target,
        obj_donors,
        con_target,
        con_donors,
        rhs,
    }
}
