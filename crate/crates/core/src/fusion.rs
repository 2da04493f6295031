//! Synthetic-control data fusion.
//!
//! Donor weights are learned from the reference-domain outcome series and the
//! covariates of both domains, then transferred to the target domain. For each
//! budget `b = (b_F, b_Z, b_X)` on a simplex grid the weights minimize
//! `b_F NSE_F + b_Z NSE_Z + b_X NSE_X` subject to
//! `(1 + NSE_Z) / (1 + NSE_Z(w_Z*)) <= 1 + eta_Z` and the analogous `X`
//! constraint, where `w_Z*`, `w_X*` are the single-block optima. The budget
//! with the smallest `NSE_F` wins.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::panel::{normalize_covariates, PanelDataset};
use crate::solver::{self, nse, Gram, SolverConfig, WeightVector};

/// Allocation of the objective among the outcome, reference-covariate and
/// target-covariate NSE blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetVector {
    pub b_f: f64,
    pub b_z: f64,
    pub b_x: f64,
}

impl BudgetVector {
    pub fn new(b_f: f64, b_z: f64, b_x: f64) -> Result<Self> {
        let ok = b_f >= 0.0 && b_z >= 0.0 && b_x >= 0.0 && ((b_f + b_z + b_x) - 1.0).abs() <= 1e-12;
        if !ok {
            return Err(Error::Domain(format!(
                "budget ({b_f}, {b_z}, {b_x}) is not a point of the simplex"
            )));
        }
        Ok(BudgetVector { b_f, b_z, b_x })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.b_f, self.b_z, self.b_x]
    }

    /// Simplex grid at `step`, enumerated lexicographically in `(b_F, b_Z)`.
    pub fn grid(step: f64) -> Result<Vec<BudgetVector>> {
        let n = grid_divisions(step)?;
        let nf = n as f64;
        let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
        for i in 0..=n {
            for k in 0..=(n - i) {
                out.push(BudgetVector {
                    b_f: i as f64 / nf,
                    b_z: k as f64 / nf,
                    b_x: (n - i - k) as f64 / nf,
                });
            }
        }
        Ok(out)
    }
}

fn grid_divisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::Domain(format!("budget grid step {step} is outside (0, 1]")));
    }
    let n = libm::round(1.0 / step);
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("budget grid step {step} does not divide 1")));
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionConfig {
    pub eta_z: f64,
    pub eta_x: f64,
    pub budget_grid_step: f64,
    pub solver: SolverConfig,
    pub normalize_covariates: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            eta_z: 0.1,
            eta_x: 0.1,
            budget_grid_step: 0.05,
            solver: SolverConfig::default(),
            normalize_covariates: true,
        }
    }
}

impl FusionConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.eta_z >= 0.0 && self.eta_x >= 0.0) {
            return Err(Error::Domain("eta_z and eta_x must be nonnegative".into()));
        }
        grid_divisions(self.budget_grid_step)?;
        self.solver.check()
    }
}

/// Outcome of one budget of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budget: BudgetVector,
    /// `NSE_F` at the budget's solution; NaN when infeasible.
    pub nse_f: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub weights: WeightVector,
    /// Chosen budget; `None` for the naive stacked fit.
    pub budget: Option<BudgetVector>,
    pub psi_hat: f64,
    /// `Y_1s - sum_i w_i Y_is` per target-domain period.
    pub gap_target: Vec<f64>,
    /// `F_1t - sum_i w_i F_it` per reference-domain period.
    pub gap_reference: Vec<f64>,
    pub nse_f: f64,
    pub nse_z: Option<f64>,
    pub nse_x: Option<f64>,
    pub baseline_nse_z: Option<f64>,
    pub baseline_nse_x: Option<f64>,
    pub per_budget: Vec<BudgetRow>,
    pub warnings: Vec<String>,
}

struct Block {
    target: Vec<f64>,
    donors: Matrix,
    gram: Gram,
}

impl Block {
    fn from_rows(m: &Matrix) -> Result<Option<Block>> {
        if m.cols() == 0 {
            return Ok(None);
        }
        let target = m.row(0).to_vec();
        let donors = m.select_rows(&(1..m.rows()).collect::<Vec<_>>());
        let gram = Gram::new(&target, &donors)?;
        Ok(Some(Block { target, donors, gram }))
    }

    fn nse(&self, w: &[f64]) -> f64 {
        nse(&self.target, &self.donors, w).unwrap_or(f64::NAN)
    }
}

struct Baseline {
    block: Block,
    nse: f64,
    rhs: f64,
}

/// Everything shared by the per-budget solves of one fusion run. Budget
/// solves are independent, so callers may evaluate [`FusionPlan::solve_budget`]
/// in any order or in parallel and hand the results to
/// [`FusionPlan::finish`] in grid order.
pub struct FusionPlan {
    dataset: PanelDataset,
    cfg: FusionConfig,
    f: Block,
    z: Option<Baseline>,
    x: Option<Baseline>,
    grid: Vec<BudgetVector>,
    warnings: Vec<String>,
}

impl FusionPlan {
    pub fn new(dataset: &PanelDataset, cfg: &FusionConfig) -> Result<FusionPlan> {
        cfg.check()?;
        dataset.ensure_valid()?;
        let normalized = normalize_covariates(dataset, cfg.normalize_covariates);
        let ds = normalized.dataset;
        let f = Block::from_rows(&ds.f)?.ok_or_else(|| Error::InvalidPanel("no reference periods".into()))?;
        let z = baseline(&ds.z, cfg.eta_z, &cfg.solver)?;
        let x = baseline(&ds.x, cfg.eta_x, &cfg.solver)?;
        Ok(FusionPlan {
            dataset: ds,
            cfg: *cfg,
            f,
            z,
            x,
            grid: BudgetVector::grid(cfg.budget_grid_step)?,
            warnings: normalized.warnings,
        })
    }

    pub fn budgets(&self) -> &[BudgetVector] {
        &self.grid
    }

    /// Solves the constrained problem for grid point `idx`.
    pub fn solve_budget(&self, idx: usize) -> Result<WeightVector> {
        let b = self.grid[idx];
        let j = self.dataset.donors();
        let mut parts: Vec<(f64, &Gram)> = Vec::with_capacity(3);
        parts.push((b.b_f, &self.f.gram));
        if let Some(z) = &self.z {
            parts.push((b.b_z, &z.block.gram));
        }
        if let Some(x) = &self.x {
            parts.push((b.b_x, &x.block.gram));
        }
        let objective = Gram::combine(&parts, j);
        let constraints: Vec<(&Gram, f64)> = [&self.z, &self.x]
            .into_iter()
            .flatten()
            .map(|c| (&c.block.gram, c.rhs))
            .collect();
        solver::solve_prepared(&objective, &constraints, &self.cfg.solver)
            .map(|s| s.weights)
            .map_err(|e| Error::Budget {
                budget: b.as_array(),
                source: alloc::boxed::Box::new(e),
            })
    }

    /// Selects the budget with the smallest `NSE_F` among feasible grid points.
    /// Infeasible points are flagged; any other solver error is returned.
    pub fn finish(self, solutions: Vec<Result<WeightVector>>) -> Result<FusionResult> {
        debug_assert_eq!(solutions.len(), self.grid.len());
        let mut rows = Vec::with_capacity(self.grid.len());
        let mut best: Option<(usize, f64, WeightVector)> = None;
        let mut closest: Option<crate::error::SolverTrace> = None;
        for (idx, sol) in solutions.into_iter().enumerate() {
            let budget = self.grid[idx];
            match sol {
                Ok(w) => {
                    let nse_f = self.f.nse(&w);
                    rows.push(BudgetRow {
                        budget,
                        nse_f,
                        feasible: true,
                    });
                    if best.as_ref().map_or(true, |(_, v, _)| nse_f < *v) {
                        best = Some((idx, nse_f, w));
                    }
                }
                Err(e) if e.is_infeasible() => {
                    if let Some(t) = e.trace() {
                        if closest.as_ref().map_or(true, |c| t.max_violation < c.max_violation) {
                            closest = Some(t.clone());
                        }
                    }
                    rows.push(BudgetRow {
                        budget,
                        nse_f: f64::NAN,
                        feasible: false,
                    })
                }
                Err(e) => return Err(e),
            }
        }
        let Some((idx, _, w)) = best else {
            // Report the budget that came closest to feasibility.
            return Err(Error::Infeasible(closest.unwrap_or(crate::error::SolverTrace {
                best_weights: Vec::new(),
                objective: f64::NAN,
                kkt_residual: f64::NAN,
                max_violation: f64::NAN,
                outer_iterations: 0,
                inner_iterations: 0,
            })));
        };
        let budget = Some(self.grid[idx]);
        Ok(self.assemble(w, budget, rows))
    }

    fn assemble(self, w: WeightVector, budget: Option<BudgetVector>, per_budget: Vec<BudgetRow>) -> FusionResult {
        let gap_target = gaps(&self.dataset.y, &w);
        let gap_reference = gaps(&self.dataset.f, &w);
        let psi_hat = crate::stats::mean(&gap_target);
        FusionResult {
            psi_hat,
            gap_target,
            gap_reference,
            nse_f: self.f.nse(&w),
            nse_z: self.z.as_ref().map(|b| b.block.nse(&w)),
            nse_x: self.x.as_ref().map(|b| b.block.nse(&w)),
            baseline_nse_z: self.z.as_ref().map(|b| b.nse),
            baseline_nse_x: self.x.as_ref().map(|b| b.nse),
            weights: w,
            budget,
            per_budget,
            warnings: self.warnings,
        }
    }
}

fn baseline(m: &Matrix, eta: f64, cfg: &SolverConfig) -> Result<Option<Baseline>> {
    let Some(block) = Block::from_rows(m)? else {
        return Ok(None);
    };
    let (w, _) = solver::minimize_unconstrained(&block.gram, cfg)?;
    let nse = block.nse(&w);
    let rhs = (1.0 + eta) * (1.0 + nse) - 1.0;
    Ok(Some(Baseline { block, nse, rhs }))
}

/// Per-period gap between the first row and the weighted donor rows.
pub fn gaps(m: &Matrix, w: &[f64]) -> Vec<f64> {
    (0..m.cols())
        .map(|c| {
            let synth: f64 = w.iter().enumerate().map(|(i, wi)| wi * m.get(i + 1, c)).sum();
            m.get(0, c) - synth
        })
        .collect()
}

/// Runs the budget search serially.
pub fn run_fusion(dataset: &PanelDataset, cfg: &FusionConfig) -> Result<FusionResult> {
    let plan = FusionPlan::new(dataset, cfg)?;
    let solutions = (0..plan.budgets().len()).map(|i| plan.solve_budget(i)).collect();
    plan.finish(solutions)
}

/// Single simplex least-squares fit on the stacked vectors `[F_i; Z_i; X_i]`.
pub fn run_naive(dataset: &PanelDataset, cfg: &FusionConfig) -> Result<FusionResult> {
    let plan = FusionPlan::new(dataset, cfg)?;
    let ds = &plan.dataset;
    let stacked = Matrix::hstack(&[&ds.f, &ds.z, &ds.x])?;
    let target = stacked.row(0).to_vec();
    let donors = stacked.select_rows(&(1..stacked.rows()).collect::<Vec<_>>());
    let sol = solver::solve_simplex_ls(&target, &donors, &cfg.solver)?;
    Ok(plan.assemble(sol.weights, None, Vec::new()))
}

/// One grid point of a sensitivity sweep. Failed points keep their error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub eta_z: f64,
    pub eta_x: f64,
    pub feasible: bool,
    pub psi_hat: Option<f64>,
    pub nse_f: Option<f64>,
    pub nse_z: Option<f64>,
    pub nse_x: Option<f64>,
    pub budget: Option<BudgetVector>,
    pub error: Option<String>,
}

impl SensitivityRow {
    pub fn from_outcome(eta_z: f64, eta_x: f64, outcome: Result<FusionResult>) -> Self {
        match outcome {
            Ok(r) => SensitivityRow {
                eta_z,
                eta_x,
                feasible: true,
                psi_hat: Some(r.psi_hat),
                nse_f: Some(r.nse_f),
                nse_z: r.nse_z,
                nse_x: r.nse_x,
                budget: r.budget,
                error: None,
            },
            Err(e) => SensitivityRow {
                eta_z,
                eta_x,
                feasible: false,
                psi_hat: None,
                nse_f: None,
                nse_z: None,
                nse_x: None,
                budget: None,
                error: Some(e.to_string()),
            },
        }
    }
}

pub fn run_sensitivity(dataset: &PanelDataset, cfg: &FusionConfig, eta_grid: &[(f64, f64)]) -> Result<Vec<SensitivityRow>> {
    if eta_grid.is_empty() {
        return Err(Error::Precondition("sensitivity grid is empty".into()));
    }
    Ok(eta_grid
        .iter()
        .map(|&(eta_z, eta_x)| {
            let c = FusionConfig { eta_z, eta_x, ..*cfg };
            SensitivityRow::from_outcome(eta_z, eta_x, run_fusion(dataset, &c))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    /// Target row 0 equals `v`-weighted donors in F, Z and X; Y gets `effect` added.
    fn exact_panel(effect: f64) -> PanelDataset {
        let donors_f = [
            vec![1.0, 3.0, 2.0, 5.0],
            vec![4.0, 1.0, 0.5, 2.0],
            vec![2.0, 2.0, 6.0, 1.0],
            vec![0.0, 5.0, 1.0, 3.0],
        ];
        let donors_z = [vec![0.1, 0.9], vec![0.7, 0.2], vec![0.4, 0.4], vec![1.0, 0.0]];
        let donors_x = [vec![0.3], vec![0.8], vec![0.1], vec![0.6]];
        let donors_y = [vec![2.0, 3.0], vec![5.0, 1.0], vec![1.0, 1.0], vec![3.0, 4.0]];
        let v = [0.2, 0.3, 0.5, 0.0];
        let mix = |rows: &[Vec<f64>]| -> Vec<f64> {
            (0..rows[0].len()).map(|c| rows.iter().zip(&v).map(|(r, w)| r[c] * w).sum()).collect()
        };
        let stack = |rows: &[Vec<f64>], shift: f64| {
            let mut t = mix(rows);
            t.iter_mut().for_each(|x| *x += shift);
            let mut all = vec![t];
            all.extend(rows.iter().cloned());
            Matrix::from_rows(&all).unwrap()
        };
        PanelDataset::new(
            ids(5),
            stack(&donors_y, effect),
            stack(&donors_f, 0.0),
            stack(&donors_x, 0.0),
            stack(&donors_z, 0.0),
        )
    }

    #[test]
    fn grid_has_231_points_in_lexicographic_order() {
        let g = BudgetVector::grid(0.05).unwrap();
        assert_eq!(g.len(), 231);
        assert_eq!(g[0].as_array(), [0.0, 0.0, 1.0]);
        assert_eq!(g[1].as_array(), [0.0, 0.05, 0.95]);
        assert_eq!(g[230].as_array(), [1.0, 0.0, 0.0]);
        for p in &g {
            assert!((p.b_f + p.b_z + p.b_x - 1.0).abs() <= 1e-12);
        }
        assert!(BudgetVector::grid(0.3).is_err());
        assert!(BudgetVector::grid(0.0).is_err());
        assert_eq!(BudgetVector::grid(1.0).unwrap().len(), 3);
    }

    #[test]
    fn budget_vector_validates() {
        assert!(BudgetVector::new(0.2, 0.3, 0.5).is_ok());
        assert!(BudgetVector::new(0.2, 0.3, 0.6).is_err());
        assert!(BudgetVector::new(-0.1, 0.6, 0.5).is_err());
    }

    #[test]
    fn exact_match_recovers_effect() {
        let cfg = FusionConfig {
            normalize_covariates: false,
            ..FusionConfig::default()
        };
        let r = run_fusion(&exact_panel(2.5), &cfg).unwrap();
        assert!(r.nse_f < 1e-8, "{}", r.nse_f);
        assert!(r.nse_z.unwrap() < 1e-8);
        assert!(r.nse_x.unwrap() < 1e-8);
        for g in &r.gap_target {
            assert!((g - 2.5).abs() < 1e-3, "{g}");
        }
        assert!((r.psi_hat - crate::stats::mean(&r.gap_target)).abs() < 1e-12);
    }

    #[test]
    fn single_donor_gives_unit_weight() {
        let ds = PanelDataset::new(
            ids(2),
            Matrix::from_rows(&[vec![5.0, 7.0], vec![1.0, 2.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 1.0]]).unwrap(),
            Matrix::from_rows(&[vec![0.5], vec![0.2]]).unwrap(),
            Matrix::from_rows(&[vec![0.1], vec![0.9]]).unwrap(),
        );
        let r = run_fusion(&ds, &FusionConfig::default()).unwrap();
        assert_eq!(r.weights.as_slice(), &[1.0]);
        assert!((r.psi_hat - (6.0 - 1.5)).abs() < 1e-12);
        assert!(r.per_budget.iter().all(|b| b.feasible));
        let n = run_naive(&ds, &FusionConfig::default()).unwrap();
        assert_eq!(n.weights.as_slice(), &[1.0]);
    }

    #[test]
    fn chosen_budget_is_grid_argmin() {
        let r = run_fusion(&exact_panel(0.0), &FusionConfig::default()).unwrap();
        let best = r
            .per_budget
            .iter()
            .filter(|b| b.feasible)
            .map(|b| b.nse_f)
            .fold(f64::INFINITY, f64::min);
        assert!(r.nse_f <= best + 1e-15);
        let first = r.per_budget.iter().position(|b| b.feasible && b.nse_f == best).unwrap();
        assert_eq!(r.budget.unwrap(), r.per_budget[first].budget);
    }

    #[test]
    fn sensitivity_rejects_empty_grid() {
        assert!(matches!(
            run_sensitivity(&exact_panel(0.0), &FusionConfig::default(), &[]),
            Err(Error::Precondition(_))
        ));
    }
}
