//! JSON and CSV outputs. Everything here is a pure function of its inputs, so
//! repeated runs produce byte-identical files.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use panelfusion_core::equi::{estimate_linear_equi, estimate_log_equi, EquiComponents, EquiMethod};
use panelfusion_core::fusion::{BudgetRow, BudgetVector, FusionConfig, FusionResult, SensitivityRow};
use panelfusion_core::panel::aggregate;
use panelfusion_core::sim::{AssumptionReport, BiasTable, Method, PlaceboTable};
use panelfusion_core::{Matrix, PanelDataset};
use serde::Serialize;

use crate::error::{CliError, CliResult, ErrorRecord};
use crate::io::fmt_f64;

pub const TOOL: &str = "panelfusion";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Effective settings of a run, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_file: Option<PathBuf>,
    pub inputs: Inputs,
    pub target_unit: Option<String>,
    pub methods: Vec<Method>,
    pub seed: Option<u64>,
    pub permissive: bool,
    pub fusion: Option<FusionConfig>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Inputs {
    pub outcomes: Option<PathBuf>,
    pub covariates_target: Option<PathBuf>,
    pub covariates_reference: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct PanelSummary {
    pub target_unit: String,
    pub donors: Vec<String>,
    pub target_periods: usize,
    pub reference_periods: usize,
    pub covariates_target: Vec<String>,
    pub covariates_reference: Vec<String>,
}

impl PanelSummary {
    pub fn of(ds: &PanelDataset) -> Self {
        PanelSummary {
            target_unit: ds.unit_ids[0].clone(),
            donors: ds.unit_ids[1..].to_vec(),
            target_periods: ds.target_periods(),
            reference_periods: ds.reference_periods(),
            covariates_target: ds.x_names.clone(),
            covariates_reference: ds.z_names.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct UnitWeight {
    pub unit: String,
    pub weight: f64,
}

#[derive(Debug, Serialize)]
pub struct BalanceRow {
    pub domain: &'static str,
    pub covariate: String,
    pub target: f64,
    pub synthetic: f64,
    pub donor_mean: f64,
}

#[derive(Debug, Serialize)]
pub struct SynthDetails {
    pub weights: Vec<UnitWeight>,
    pub budget: Option<BudgetVector>,
    pub nse_f: f64,
    pub nse_z: Option<f64>,
    pub nse_x: Option<f64>,
    pub baseline_nse_z: Option<f64>,
    pub baseline_nse_x: Option<f64>,
    pub feasible_budgets: usize,
    pub per_budget: Vec<BudgetRow>,
    pub covariate_balance: Vec<BalanceRow>,
}

#[derive(Debug, Serialize)]
pub struct MethodReport {
    pub method: Method,
    pub psi_hat: f64,
    /// `psi_hat` times 100, for outcomes measured as proportions.
    pub psi_hat_pp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub components: Option<EquiComponents>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthDetails>,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub manifest: Manifest,
    pub panel: PanelSummary,
    pub estimates: Vec<MethodReport>,
    pub warnings: Vec<String>,
}

/// One line of `gaps.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub method: Method,
    pub domain: &'static str,
    pub period: usize,
    pub gap: f64,
}

/// Everything `estimate` computes for one method.
pub struct MethodOutput {
    pub report: MethodReport,
    pub gaps: Vec<GapRow>,
    pub warnings: Vec<String>,
}

fn gap_rows(method: Method, target: &[f64], reference: &[f64]) -> Vec<GapRow> {
    let rows = |domain, g: &[f64]| {
        g.iter()
            .enumerate()
            .map(move |(t, &gap)| GapRow {
                method,
                domain,
                period: t + 1,
                gap,
            })
            .collect::<Vec<_>>()
    };
    let mut out = rows("reference", reference);
    out.extend(rows("target", target));
    out
}

/// Per-period gaps of an equi-confounding fit. Their target-domain mean is
/// the point estimate.
fn equi_gaps(ds: &PanelDataset, method: EquiMethod, c: &EquiComponents) -> (Vec<f64>, Vec<f64>) {
    let agg = aggregate(ds);
    let j = ds.donors();
    let gaps = |m: &Matrix| -> Vec<f64> {
        (0..m.cols())
            .map(|t| {
                let donor_sum: f64 = (1..=j).map(|i| m.get(i, t)).sum();
                let fit = match method {
                    EquiMethod::Linear => {
                        let shift: f64 = (1..=j).map(|i| m.get(i, t) - agg.f_bar[i]).sum::<f64>() / j as f64;
                        c.target_f + shift
                    }
                    EquiMethod::Logarithmic => c.target_f * donor_sum / c.donor_f_sum,
                };
                m.get(0, t) - fit
            })
            .collect()
    };
    (gaps(&ds.y), gaps(&ds.f))
}

pub fn equi_output(ds: &PanelDataset, method: Method) -> CliResult<MethodOutput> {
    let agg = aggregate(ds);
    let (est, kind) = match method {
        Method::LinearEqui => (estimate_linear_equi(&agg)?, EquiMethod::Linear),
        Method::LogEqui => (estimate_log_equi(&agg)?, EquiMethod::Logarithmic),
        Method::Synth => unreachable!("synth has its own report"),
    };
    let (target, reference) = equi_gaps(ds, kind, &est.components);
    Ok(MethodOutput {
        report: MethodReport {
            method,
            psi_hat: est.psi_hat,
            psi_hat_pp: 100.0 * est.psi_hat,
            components: Some(est.components),
            synth: None,
        },
        gaps: gap_rows(method, &target, &reference),
        warnings: Vec::new(),
    })
}

fn balance(domain: &'static str, names: &[String], m: &Matrix, w: &[f64]) -> Vec<BalanceRow> {
    let j = w.len();
    names
        .iter()
        .enumerate()
        .map(|(k, name)| BalanceRow {
            domain,
            covariate: name.clone(),
            target: m.get(0, k),
            synthetic: w.iter().enumerate().map(|(i, wi)| wi * m.get(i + 1, k)).sum(),
            donor_mean: (1..=j).map(|i| m.get(i, k)).sum::<f64>() / j as f64,
        })
        .collect()
}

pub fn synth_output(ds: &PanelDataset, r: FusionResult) -> MethodOutput {
    let w = r.weights.as_slice();
    let weights = ds.unit_ids[1..]
        .iter()
        .zip(w)
        .map(|(unit, &weight)| UnitWeight {
            unit: unit.clone(),
            weight,
        })
        .collect();
    let mut covariate_balance = balance("target", &ds.x_names, &ds.x, w);
    covariate_balance.extend(balance("reference", &ds.z_names, &ds.z, w));
    let gaps = gap_rows(Method::Synth, &r.gap_target, &r.gap_reference);
    MethodOutput {
        report: MethodReport {
            method: Method::Synth,
            psi_hat: r.psi_hat,
            psi_hat_pp: 100.0 * r.psi_hat,
            components: None,
            synth: Some(SynthDetails {
                weights,
                budget: r.budget,
                nse_f: r.nse_f,
                nse_z: r.nse_z,
                nse_x: r.nse_x,
                baseline_nse_z: r.baseline_nse_z,
                baseline_nse_x: r.baseline_nse_x,
                feasible_budgets: r.per_budget.iter().filter(|b| b.feasible).count(),
                per_budget: r.per_budget,
                covariate_balance,
            }),
        },
        gaps,
        warnings: r.warnings,
    }
}

// ---- writers ----

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes a CSV from a header and string records.
pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let wrap = |e: csv::Error| CliError::io(path, std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(&r).map_err(wrap)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_gaps(path: &Path, rows: &[GapRow]) -> CliResult<()> {
    write_csv(
        path,
        &["method", "domain", "period", "gap"],
        rows.iter().map(|r| {
            vec![
                r.method.label().to_string(),
                r.domain.to_string(),
                r.period.to_string(),
                fmt_f64(r.gap),
            ]
        }),
    )
}

pub fn write_bias(dir: &Path, table: &BiasTable) -> CliResult<()> {
    write_csv(
        &dir.join("bias_rows.csv"),
        &["replicate", "periods", "method", "estimate", "psi0", "bias", "error"],
        table.rows.iter().map(|r| {
            vec![
                r.replicate.to_string(),
                r.periods.to_string(),
                r.method.label().to_string(),
                fmt_f64(r.estimate),
                fmt_f64(r.psi0),
                fmt_f64(r.bias),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    write_csv(
        &dir.join("bias_summary.csv"),
        &[
            "periods",
            "method",
            "mean_bias",
            "mean_abs_bias",
            "bias_q25",
            "bias_q75",
            "std_error",
            "successes",
            "failures",
        ],
        table.summary.iter().map(|s| {
            vec![
                s.periods.to_string(),
                s.method.label().to_string(),
                fmt_f64(s.mean_bias),
                fmt_f64(s.mean_abs_bias),
                fmt_f64(s.bias_q25),
                fmt_f64(s.bias_q75),
                fmt_f64(s.std_error),
                s.successes.to_string(),
                s.failures.to_string(),
            ]
        }),
    )
}

pub fn write_placebo(dir: &Path, table: &PlaceboTable) -> CliResult<()> {
    write_csv(
        &dir.join("placebo_runs.csv"),
        &["unit", "is_target", "psi_hat", "abs_psi_hat", "error"],
        table.runs.iter().map(|r| {
            vec![
                r.unit_id.clone(),
                r.is_target.to_string(),
                opt(r.psi_hat),
                opt(r.psi_hat.map(f64::abs)),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    let mut gap_rows = Vec::new();
    for r in &table.runs {
        for (domain, g) in [("reference", &r.gap_reference), ("target", &r.gap_target)] {
            for (t, v) in g.iter().enumerate() {
                gap_rows.push(vec![
                    r.unit_id.clone(),
                    domain.to_string(),
                    (t + 1).to_string(),
                    fmt_f64(*v),
                ]);
            }
        }
    }
    write_csv(&dir.join("placebo_gaps.csv"), &["unit", "domain", "period", "gap"], gap_rows)
}

pub fn write_sensitivity(path: &Path, rows: &[SensitivityRow]) -> CliResult<()> {
    write_csv(
        path,
        &["eta_z", "eta_x", "feasible", "psi_hat", "nse_f", "nse_z", "nse_x", "b_f", "b_z", "b_x", "error"],
        rows.iter().map(|r| {
            let b = r.budget.map(|b| b.as_array());
            vec![
                fmt_f64(r.eta_z),
                fmt_f64(r.eta_x),
                r.feasible.to_string(),
                opt(r.psi_hat),
                opt(r.nse_f),
                opt(r.nse_z),
                opt(r.nse_x),
                opt(b.map(|b| b[0])),
                opt(b.map(|b| b[1])),
                opt(b.map(|b| b[2])),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn write_assumptions(dir: &Path, manifest: &Manifest, rep: &AssumptionReport) -> CliResult<()> {
    write_csv(
        &dir.join("assumption_points.csv"),
        &["scale", "domain", "group", "value"],
        rep.points
            .iter()
            .map(|p| vec![p.scale.clone(), p.domain.clone(), p.group.clone(), fmt_f64(p.value)]),
    )?;
    #[derive(Serialize)]
    struct Out<'a> {
        manifest: &'a Manifest,
        assumptions: &'a AssumptionReport,
    }
    write_json(&dir.join("assumptions.json"), &Out { manifest, assumptions: rep })
}

/// Best effort: failure to write the error file must not mask the original error.
pub fn write_error(dir: &Path, err: &CliError) {
    #[derive(Serialize)]
    struct Out {
        tool: &'static str,
        version: &'static str,
        error: ErrorRecord,
    }
    let _ = std::fs::create_dir_all(dir);
    let _ = write_json(
        &dir.join("error.json"),
        &Out {
            tool: TOOL,
            version: VERSION,
            error: err.record(),
        },
    );
}

pub fn print_line(mut out: impl Write, line: &str) {
    let _ = writeln!(out, "{line}");
}
