//! Accelerated projected gradient on the simplex for the augmented-Lagrangian
//! subproblem
//!
//! ```text
//! phi(w) = w'Qw + sum_k [max(0, l_k + rho g_k(w))^2 - l_k^2] / (2 rho),
//! g_k(w) = w'Q_k w - rhs_k
//! ```
//!
//! Backtracking on the Lipschitz estimate, monotone acceptance and
//! gradient-based momentum restarts. All matrix products are carried as
//! linear images so each iteration costs one product per quadratic.

use alloc::vec;
use alloc::vec::Vec;

use super::quadratic::Gram;
use super::simplex::project_simplex;
use crate::matrix::dot;

pub(crate) struct QuadConstraint<'a> {
    pub gram: &'a Gram,
    pub rhs: f64,
}

pub(crate) struct Subproblem<'a> {
    pub objective: &'a Gram,
    pub constraints: &'a [QuadConstraint<'a>],
    pub multipliers: &'a [f64],
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct InnerOutcome {
    pub iterations: usize,
    pub converged: bool,
    #[allow(dead_code)]
    pub residual: f64,
    pub lipschitz: f64,
}

/// Linear images `Q w` and `Q_k w` of a point.
#[derive(Clone)]
struct Images {
    obj: Vec<f64>,
    cons: Vec<Vec<f64>>,
}

impl Images {
    fn new(j: usize, k: usize) -> Self {
        Images {
            obj: vec![0.0; j],
            cons: vec![vec![0.0; j]; k],
        }
    }

    fn compute(&mut self, p: &Subproblem<'_>, w: &[f64], tmp: &mut Vec<f64>) {
        p.objective.apply(w, &mut self.obj, tmp);
        for (img, c) in self.cons.iter_mut().zip(p.constraints) {
            c.gram.apply(w, img, tmp);
        }
    }

    /// `self = a + beta (a - b)`
    fn extrapolate(&mut self, a: &Images, b: &Images, beta: f64) {
        lerp(&mut self.obj, &a.obj, &b.obj, beta);
        for ((s, x), y) in self.cons.iter_mut().zip(&a.cons).zip(&b.cons) {
            lerp(s, x, y, beta);
        }
    }
}

fn lerp(out: &mut [f64], a: &[f64], b: &[f64], beta: f64) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = x + beta * (x - y);
    }
}

impl Subproblem<'_> {
    fn value(&self, w: &[f64], img: &Images) -> f64 {
        let mut v = dot(w, &img.obj);
        for ((c, ci), &lam) in self.constraints.iter().zip(&img.cons).zip(self.multipliers) {
            let g = dot(w, ci) - c.rhs;
            let m = (lam + self.penalty * g).max(0.0);
            v += (m * m - lam * lam) / (2.0 * self.penalty);
        }
        v
    }

    fn gradient(&self, w: &[f64], img: &Images, out: &mut [f64]) {
        for (o, q) in out.iter_mut().zip(&img.obj) {
            *o = 2.0 * q;
        }
        for ((c, ci), &lam) in self.constraints.iter().zip(&img.cons).zip(self.multipliers) {
            let g = dot(w, ci) - c.rhs;
            let m = (lam + self.penalty * g).max(0.0);
            if m > 0.0 {
                for (o, q) in out.iter_mut().zip(ci) {
                    *o += 2.0 * m * q;
                }
            }
        }
    }

    /// Starting Lipschitz estimate for the gradient.
    pub fn lipschitz_guess(&self) -> f64 {
        let mut l = 2.0 * self.objective.lambda_max();
        for (c, &lam) in self.constraints.iter().zip(self.multipliers) {
            l += 2.0 * lam * c.gram.lambda_max();
        }
        if l > 0.0 {
            l
        } else {
            1.0
        }
    }

    /// Natural residual `||w - P(w - grad/L)||_inf` at `w`.
    pub fn stationarity(&self, w: &[f64], lipschitz: f64) -> f64 {
        let j = w.len();
        let mut img = Images::new(j, self.constraints.len());
        let mut tmp = Vec::new();
        img.compute(self, w, &mut tmp);
        let mut g = vec![0.0; j];
        self.gradient(w, &img, &mut g);
        let mut z: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - b / lipschitz).collect();
        let mut scratch = vec![0.0; j];
        project_simplex(&mut z, &mut scratch);
        z.iter().zip(w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Minimizes `p` over the simplex starting from `x`; `x` is overwritten with
/// the final iterate.
pub(crate) fn minimize(
    p: &Subproblem<'_>,
    x: &mut [f64],
    max_iters: usize,
    step_tol: f64,
) -> InnerOutcome {
    let j = x.len();
    let k = p.constraints.len();
    let mut tmp = Vec::new();
    let mut scratch = vec![0.0; j];

    let mut lip = p.lipschitz_guess();
    let mut img_x = Images::new(j, k);
    img_x.compute(p, x, &mut tmp);
    let mut fx = p.value(x, &img_x);

    let mut y = x.to_vec();
    let mut img_y = img_x.clone();
    let mut x_prev = x.to_vec();
    let mut img_prev = img_x.clone();
    let mut z = vec![0.0; j];
    let mut img_z = Images::new(j, k);
    let mut grad = vec![0.0; j];
    let mut momentum = 1.0_f64;
    let mut residual = f64::INFINITY;
    // true when y coincides with x (start or right after a restart)
    let mut at_x = true;

    for it in 1..=max_iters {
        let fy = p.value(&y, &img_y);
        p.gradient(&y, &img_y, &mut grad);
        let fz = loop {
            for ((zi, yi), gi) in z.iter_mut().zip(&y).zip(&grad) {
                *zi = yi - gi / lip;
            }
            project_simplex(&mut z, &mut scratch);
            img_z.compute(p, &z, &mut tmp);
            let fz = p.value(&z, &img_z);
            let mut lin = 0.0;
            let mut sq = 0.0;
            for ((zi, yi), gi) in z.iter().zip(&y).zip(&grad) {
                let d = zi - yi;
                lin += gi * d;
                sq += d * d;
            }
            let slack = 1e-13 * (fy.abs() + 1e-300);
            if fz <= fy + lin + 0.5 * lip * sq + slack || lip > 1e300 {
                break fz;
            }
            lip *= 2.0;
        };
        residual = z
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        // From y == x the backtracking step can only rise through rounding;
        // accept it rather than cycling in place.
        if fz <= fx || at_x {
            // restart when the step direction opposes the momentum
            let restart = z
                .iter()
                .zip(&y)
                .zip(x.iter())
                .map(|((zi, yi), xi)| (yi - zi) * (zi - xi))
                .sum::<f64>()
                > 0.0;
            x_prev.copy_from_slice(x);
            core::mem::swap(&mut img_prev, &mut img_x);
            x.copy_from_slice(&z);
            img_x.clone_from(&img_z);
            fx = fz;

            if residual <= step_tol {
                return InnerOutcome {
                    iterations: it,
                    converged: true,
                    residual,
                    lipschitz: lip,
                };
            }

            if restart {
                momentum = 1.0;
                y.copy_from_slice(x);
                img_y.clone_from(&img_x);
                at_x = true;
            } else {
                at_x = false;
                let next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * momentum * momentum));
                let beta = (momentum - 1.0) / next;
                momentum = next;
                for ((yi, xi), pi) in y.iter_mut().zip(x.iter()).zip(&x_prev) {
                    *yi = xi + beta * (xi - pi);
                }
                img_y.extrapolate(&img_x, &img_prev, beta);
            }
        } else {
            if residual <= step_tol {
                return InnerOutcome {
                    iterations: it,
                    converged: true,
                    residual,
                    lipschitz: lip,
                };
            }
            momentum = 1.0;
            y.copy_from_slice(x);
            img_y.clone_from(&img_x);
            at_x = true;
        }
    }
    InnerOutcome {
        iterations: max_iters,
        converged: false,
        residual,
        lipschitz: lip,
    }
}
