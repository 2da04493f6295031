//! Parallel drivers over the core's units of work. Each returns exactly what
//! the serial core runner returns.

use panelfusion_core::fusion::{FusionConfig, FusionPlan, FusionResult, SensitivityRow};
use panelfusion_core::sim::{check_placebo, placebo_run, BiasExperiment, BiasTable, PlaceboTable};
use panelfusion_core::{Error, PanelDataset, Result};
use rayon::prelude::*;

/// Budget grid solved in parallel.
pub fn fusion(ds: &PanelDataset, cfg: &FusionConfig) -> Result<FusionResult> {
    let plan = FusionPlan::new(ds, cfg)?;
    let solutions = (0..plan.budgets().len())
        .into_par_iter()
        .map(|i| plan.solve_budget(i))
        .collect();
    plan.finish(solutions)
}

/// Replicates in parallel; each replicate runs its fusions serially.
pub fn bias(exp: &BiasExperiment) -> Result<BiasTable> {
    exp.check()?;
    let rows = (1..=exp.replicates as u64)
        .into_par_iter()
        .flat_map_iter(|m| exp.run_replicate(m))
        .collect();
    Ok(BiasTable::from_rows(exp, rows))
}

pub fn placebo(ds: &PanelDataset, cfg: &FusionConfig) -> Result<PlaceboTable> {
    check_placebo(ds)?;
    cfg.check()?;
    let runs = (0..ds.unit_ids.len())
        .into_par_iter()
        .map(|u| placebo_run(ds, cfg, u))
        .collect();
    Ok(PlaceboTable::from_runs(runs))
}

pub fn sensitivity(ds: &PanelDataset, cfg: &FusionConfig, grid: &[(f64, f64)]) -> Result<Vec<SensitivityRow>> {
    if grid.is_empty() {
        return Err(Error::Precondition("sensitivity grid is empty".into()));
    }
    Ok(grid
        .par_iter()
        .map(|&(eta_z, eta_x)| {
            let c = FusionConfig { eta_z, eta_x, ..*cfg };
            SensitivityRow::from_outcome(eta_z, eta_x, panelfusion_core::fusion::run_fusion(ds, &c))
        })
        .collect())
}
