//! TOML run configuration.
//!
//! Every key is optional. Values given on the command line override the file,
//! which overrides the built-in defaults. Relative paths are resolved against
//! the directory holding the config file.
//!
//! ```toml
//! outcomes = "data/outcomes.csv"
//! covariates_target = "data/covariates_target.csv"
//! covariates_reference = "data/covariates_reference.csv"
//! target_unit = "Chelsea"
//! method = "all"
//! seed = 7
//!
//! [fusion]
//! eta_z = 0.1
//! eta_x = 0.1
//! budget_grid_step = 0.05
//!
//! [fusion.solver]
//! max_inner_iters = 5000
//!
//! [dgp]
//! donors = 30
//! target_periods = 5
//!
//! [experiment]
//! replicates = 300
//! periods = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100]
//!
//! [sensitivity]
//! eta_values = [0.05, 0.1, 0.2]
//! ```

use std::path::{Path, PathBuf};

use panelfusion_core::fusion::FusionConfig;
use panelfusion_core::sim::DgpConfig;
use panelfusion_core::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub outcomes: Option<PathBuf>,
    pub covariates_target: Option<PathBuf>,
    pub covariates_reference: Option<PathBuf>,
    pub target_unit: Option<String>,
    pub method: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub permissive: Option<bool>,
    pub fusion: Option<FusionFile>,
    pub dgp: Option<DgpConfig>,
    pub experiment: Option<ExperimentFile>,
    pub sensitivity: Option<SensitivityFile>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionFile {
    pub eta_z: Option<f64>,
    pub eta_x: Option<f64>,
    pub budget_grid_step: Option<f64>,
    pub normalize_covariates: Option<bool>,
    pub solver: Option<SolverConfig>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub kind: Option<String>,
    pub design: Option<String>,
    pub effect: Option<f64>,
    pub replicates: Option<usize>,
    pub periods: Option<Vec<usize>>,
    pub methods: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityFile {
    pub eta_values: Option<Vec<f64>>,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<FileConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.outcomes,
            &mut cfg.covariates_target,
            &mut cfg.covariates_reference,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Command-line overrides of the fusion settings.
#[derive(Debug, Clone, Copy, Default)]
pub struct FusionFlags {
    pub eta_z: Option<f64>,
    pub eta_x: Option<f64>,
    pub budget_step: Option<f64>,
    pub no_normalize: bool,
}

pub fn effective_fusion(file: &FileConfig, flags: &FusionFlags) -> CliResult<FusionConfig> {
    let mut cfg = FusionConfig::default();
    if let Some(f) = &file.fusion {
        cfg.eta_z = f.eta_z.unwrap_or(cfg.eta_z);
        cfg.eta_x = f.eta_x.unwrap_or(cfg.eta_x);
        cfg.budget_grid_step = f.budget_grid_step.unwrap_or(cfg.budget_grid_step);
        cfg.normalize_covariates = f.normalize_covariates.unwrap_or(cfg.normalize_covariates);
        cfg.solver = f.solver.unwrap_or(cfg.solver);
    }
    cfg.eta_z = flags.eta_z.unwrap_or(cfg.eta_z);
    cfg.eta_x = flags.eta_x.unwrap_or(cfg.eta_x);
    cfg.budget_grid_step = flags.budget_step.unwrap_or(cfg.budget_grid_step);
    if flags.no_normalize {
        cfg.normalize_covariates = false;
    }
    cfg.check().map_err(|e| CliError::Usage(format!("invalid fusion settings: {e}")))?;
    Ok(cfg)
}

/// `flag`, else the file value, else nothing.
pub fn pick<T: Clone>(flag: Option<T>, file: &Option<T>) -> Option<T> {
    flag.or_else(|| file.clone())
}
