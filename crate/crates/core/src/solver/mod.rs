//! Simplex-constrained least squares and the budgeted QCQP.
//!
//! Every matching criterion is an NSE block, a convex quadratic in the donor
//! weights. The unconstrained problem is solved by accelerated projected
//! gradient with an exact simplex projection. Quadratic constraints
//! `NSE_k(w) <= rhs_k` are handled by an augmented-Lagrangian outer loop over
//! the same inner solver. Everything starts from the uniform weight vector and
//! involves no randomness, so results are bit-reproducible.

mod apg;
mod quadratic;
mod simplex;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SolverTrace};
use crate::matrix::{dot, Matrix};
use apg::{QuadConstraint, Subproblem};
pub(crate) use quadratic::Gram;
pub use quadratic::nse;
pub use simplex::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    /// Relative objective tolerance; also sets the inner step tolerance.
    pub objective_tol: f64,
    /// Absolute tolerance on NSE constraint slack.
    pub constraint_tol: f64,
    pub penalty_growth: f64,
    pub initial_penalty: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_outer_iters: 200,
            max_inner_iters: 5000,
            objective_tol: 1e-10,
            constraint_tol: 1e-8,
            penalty_growth: 10.0,
            initial_penalty: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        let ok = self.max_outer_iters > 0
            && self.max_inner_iters > 0
            && self.objective_tol > 0.0
            && self.constraint_tol > 0.0
            && self.penalty_growth > 1.0
            && self.initial_penalty > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid solver configuration {self:?}")))
        }
    }

    /// Inner stopping threshold on the projected-gradient step, in weight units.
    fn step_tol(&self) -> f64 {
        libm::sqrt(self.objective_tol) * 1e-3
    }
}

/// Outcome of a single-block simplex least-squares solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexLsSolution {
    pub weights: WeightVector,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Minimizes `NSE(target, donors, w)` over the simplex.
pub fn solve_simplex_ls(target: &[f64], donors: &Matrix, cfg: &SolverConfig) -> Result<SimplexLsSolution> {
    cfg.check()?;
    let gram = Gram::new(target, donors)?;
    let (w, outcome) = minimize_unconstrained(&gram, cfg)?;
    let objective = quadratic::nse_unchecked(target, donors, &w);
    Ok(SimplexLsSolution {
        weights: w,
        objective,
        kkt_residual: outcome.0,
        iterations: outcome.1,
    })
}

/// Returns the weights plus `(kkt residual, iterations)`.
pub(crate) fn minimize_unconstrained(gram: &Gram, cfg: &SolverConfig) -> Result<(WeightVector, (f64, usize))> {
    let j = gram.dim();
    let mut x = vec![1.0 / j as f64; j];
    if j == 1 {
        return Ok((WeightVector::from_iterate(x), (0.0, 0)));
    }
    let sub = Subproblem {
        objective: gram,
        constraints: &[],
        multipliers: &[],
        penalty: 1.0,
    };
    let out = apg::minimize(&sub, &mut x, cfg.max_inner_iters, cfg.step_tol());
    let kkt = sub.stationarity(&x, out.lipschitz);
    if !out.converged {
        let objective = dot_quad(gram, &x);
        return Err(Error::NonConvergence(SolverTrace {
            best_weights: x,
            objective,
            kkt_residual: kkt,
            max_violation: 0.0,
            outer_iterations: 1,
            inner_iterations: out.iterations,
        }));
    }
    Ok((WeightVector::from_iterate(x), (kkt, out.iterations)))
}

fn dot_quad(g: &Gram, w: &[f64]) -> f64 {
    let mut qw = vec![0.0; w.len()];
    let mut tmp = Vec::new();
    g.apply(w, &mut qw, &mut tmp);
    dot(w, &qw)
}

/// One weighted NSE term of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBlock {
    pub weight: f64,
    pub target: Vec<f64>,
    pub donors: Matrix,
}

/// `NSE(target, donors, w) <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NseConstraint {
    pub target: Vec<f64>,
    pub donors: Matrix,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpProblem {
    pub objective: Vec<ObjectiveBlock>,
    pub constraints: Vec<NseConstraint>,
    pub donors: usize,
}

impl QcqpProblem {
    fn check(&self) -> Result<()> {
        if self.donors == 0 {
            return Err(Error::Domain("QCQP with no donors".into()));
        }
        for b in &self.objective {
            if !(b.weight >= 0.0) {
                return Err(Error::Domain(format!("objective weight {} is negative", b.weight)));
            }
            if b.donors.rows() != self.donors {
                return Err(Error::Dimension(format!(
                    "objective block has {} donors, problem has {}",
                    b.donors.rows(),
                    self.donors
                )));
            }
        }
        for c in &self.constraints {
            if !(c.rhs >= 0.0) {
                return Err(Error::Domain(format!("constraint rhs {} is negative", c.rhs)));
            }
            if c.donors.rows() != self.donors {
                return Err(Error::Dimension(format!(
                    "constraint block has {} donors, problem has {}",
                    c.donors.rows(),
                    self.donors
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpDiagnostics {
    pub objective: f64,
    /// `rhs_k - NSE_k(w)` per constraint; nonnegative up to `constraint_tol`.
    pub slacks: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub final_penalty: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcqpSolution {
    pub weights: WeightVector,
    pub diagnostics: QcqpDiagnostics,
}

/// Minimizes the weighted NSE sum over the simplex subject to NSE upper bounds.
pub fn solve_budgeted_qcqp(problem: &QcqpProblem, cfg: &SolverConfig) -> Result<QcqpSolution> {
    cfg.check()?;
    problem.check()?;
    let j = problem.donors;
    let grams = problem
        .objective
        .iter()
        .map(|b| Gram::new(&b.target, &b.donors))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<(f64, &Gram)> = problem.objective.iter().map(|b| b.weight).zip(grams.iter()).collect();
    let objective = Gram::combine(&parts, j);
    let cons_grams = problem
        .constraints
        .iter()
        .map(|c| Gram::new(&c.target, &c.donors))
        .collect::<Result<Vec<_>>>()?;
    let cons: Vec<(&Gram, f64)> = cons_grams.iter().zip(problem.constraints.iter().map(|c| c.rhs)).collect();

    let raw = solve_prepared(&objective, &cons, cfg)?;
    let w = raw.weights;
    let objective_value = problem
        .objective
        .iter()
        .map(|b| b.weight * quadratic::nse_unchecked(&b.target, &b.donors, &w))
        .sum();
    let slacks = problem
        .constraints
        .iter()
        .map(|c| c.rhs - quadratic::nse_unchecked(&c.target, &c.donors, &w))
        .collect();
    Ok(QcqpSolution {
        weights: w,
        diagnostics: QcqpDiagnostics {
            objective: objective_value,
            slacks,
            multipliers: raw.multipliers,
            final_penalty: raw.penalty,
            kkt_residual: raw.kkt_residual,
            outer_iterations: raw.outer_iterations,
            inner_iterations: raw.inner_iterations,
        },
    })
}

pub(crate) struct PreparedSolution {
    pub weights: WeightVector,
    pub multipliers: Vec<f64>,
    pub penalty: f64,
    pub kkt_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
}

/// Relative decrease the best violation must achieve between penalty
/// increases before they count as stalled.
const STALL_RELATIVE: f64 = 1e-3;
const STALL_INCREASES: usize = 5;

/// Augmented-Lagrangian loop over precomputed quadratics.
pub(crate) fn solve_prepared(objective: &Gram, constraints: &[(&Gram, f64)], cfg: &SolverConfig) -> Result<PreparedSolution> {
    let j = objective.dim();
    let k = constraints.len();
    let quad: Vec<QuadConstraint<'_>> = constraints
        .iter()
        .map(|(g, rhs)| QuadConstraint { gram: g, rhs: *rhs })
        .collect();
    let mut x = vec![1.0 / j as f64; j];
    let mut multipliers = vec![0.0; k];
    let mut penalty = cfg.initial_penalty;
    let step_tol = cfg.step_tol();

    let mut inner_total = 0;
    let mut prev_violation = f64::INFINITY;
    let mut best_violation = f64::INFINITY;
    let mut best_at_last_increase = f64::INFINITY;
    let mut stalled = 0;
    let mut last_kkt = f64::INFINITY;
    let mut values = vec![0.0; k];

    for outer in 1..=cfg.max_outer_iters {
        let sub = Subproblem {
            objective,
            constraints: &quad,
            multipliers: &multipliers,
            penalty,
        };
        let inner = if j == 1 {
            apg::InnerOutcome {
                iterations: 0,
                converged: true,
                residual: 0.0,
                lipschitz: 1.0,
            }
        } else {
            apg::minimize(&sub, &mut x, cfg.max_inner_iters, step_tol)
        };
        inner_total += inner.iterations;
        last_kkt = if j == 1 { 0.0 } else { sub.stationarity(&x, inner.lipschitz) };

        for (v, (g, rhs)) in values.iter_mut().zip(constraints) {
            *v = dot_quad(g, &x) - rhs;
        }
        let violation = values.iter().fold(0.0_f64, |m, &g| m.max(g));
        let complementarity = values
            .iter()
            .zip(&multipliers)
            .map(|(&g, &l)| g.max(-l / penalty).abs())
            .fold(0.0, f64::max);

        if inner.converged && violation <= cfg.constraint_tol && complementarity <= cfg.constraint_tol {
            return Ok(PreparedSolution {
                weights: WeightVector::from_iterate(x),
                multipliers,
                penalty,
                kkt_residual: last_kkt,
                outer_iterations: outer,
                inner_iterations: inner_total,
            });
        }

        for (l, &g) in multipliers.iter_mut().zip(&values) {
            *l = (*l + penalty * g).max(0.0);
        }
        best_violation = best_violation.min(violation);
        if violation > cfg.constraint_tol && violation > 0.25 * prev_violation {
            penalty *= cfg.penalty_growth;
            if best_violation < (1.0 - STALL_RELATIVE) * best_at_last_increase {
                stalled = 0;
            } else {
                stalled += 1;
            }
            best_at_last_increase = best_violation;
            if stalled >= STALL_INCREASES {
                return Err(Error::Infeasible(SolverTrace {
                    objective: dot_quad(objective, &x),
                    best_weights: x,
                    kkt_residual: last_kkt,
                    max_violation: violation,
                    outer_iterations: outer,
                    inner_iterations: inner_total,
                }));
            }
        }
        prev_violation = violation;
    }
    let violation = values.iter().fold(0.0_f64, |m, &g| m.max(g));
    Err(Error::NonConvergence(SolverTrace {
        objective: dot_quad(objective, &x),
        best_weights: x,
        kkt_residual: last_kkt,
        max_violation: violation,
        outer_iterations: cfg.max_outer_iters,
        inner_iterations: inner_total,
    }))
}
