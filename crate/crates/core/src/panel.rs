//! Two-domain panel data: the target-domain outcomes `y` (S periods) and
//! covariates `x`, and the reference-domain outcomes `f` (T periods) and
//! covariates `z`. Row 0 is always the treated target unit; rows `1..=J` are
//! the donors.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    pub unit_ids: Vec<String>,
    /// Target-domain outcomes, (J+1) x S.
    pub y: Matrix,
    /// Reference-domain outcomes, (J+1) x T.
    pub f: Matrix,
    /// Target-domain covariates, (J+1) x d_t.
    pub x: Matrix,
    /// Reference-domain covariates, (J+1) x d_r.
    pub z: Matrix,
    pub x_names: Vec<String>,
    pub z_names: Vec<String>,
}

impl PanelDataset {
    /// Assembles a dataset with generated covariate names (`x1`, `z1`, ...).
    pub fn new(unit_ids: Vec<String>, y: Matrix, f: Matrix, x: Matrix, z: Matrix) -> Self {
        let x_names = (1..=x.cols()).map(|k| format!("x{k}")).collect();
        let z_names = (1..=z.cols()).map(|k| format!("z{k}")).collect();
        PanelDataset {
            unit_ids,
            y,
            f,
            x,
            z,
            x_names,
            z_names,
        }
    }

    /// Number of donors J.
    pub fn donors(&self) -> usize {
        self.unit_ids.len().saturating_sub(1)
    }

    pub fn target_periods(&self) -> usize {
        self.y.cols()
    }

    pub fn reference_periods(&self) -> usize {
        self.f.cols()
    }

    /// Returns `Err(InvalidPanel)` carrying every failed check.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        if report.passed() {
            Ok(())
        } else {
            Err(Error::InvalidPanel(report.failures().collect::<Vec<_>>().join("; ")))
        }
    }

    /// Moves unit `new_target` to row 0 and keeps the remaining units in their
    /// original relative order. Used by the placebo runs.
    pub fn with_target(&self, new_target: usize) -> PanelDataset {
        let n = self.unit_ids.len();
        let mut order = Vec::with_capacity(n);
        order.push(new_target);
        order.extend((0..n).filter(|&i| i != new_target));
        self.reorder(&order)
    }

    /// Reorders units; `order[k]` is the source row of output row `k`.
    pub fn reorder(&self, order: &[usize]) -> PanelDataset {
        PanelDataset {
            unit_ids: order.iter().map(|&i| self.unit_ids[i].clone()).collect(),
            y: self.y.select_rows(order),
            f: self.f.select_rows(order),
            x: self.x.select_rows(order),
            z: self.z.select_rows(order),
            x_names: self.x_names.clone(),
            z_names: self.z_names.clone(),
        }
    }

    /// Keeps only the first `periods` reference-domain periods.
    pub fn truncate_reference(&self, periods: usize) -> PanelDataset {
        PanelDataset {
            f: self.f.truncate_cols(periods),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: String,
    pub passed: bool,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &str> + '_ {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.message.as_str())
    }

    fn record(&mut self, check: &str, passed: bool, message: String) {
        self.checks.push(CheckOutcome {
            check: check.into(),
            passed,
            message,
        });
    }
}

/// Runs every structural check and reports each one; never aborts early.
pub fn validate(ds: &PanelDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = ds.unit_ids.len();

    report.record(
        "donors",
        n >= 2,
        if n >= 2 {
            format!("{} donors", n - 1)
        } else {
            format!("need at least one donor besides the target, found {n} unit(s)")
        },
    );

    let blocks: [(&str, &Matrix, &str); 4] = [
        ("y", &ds.y, "period"),
        ("f", &ds.f, "period"),
        ("x", &ds.x, "covariate"),
        ("z", &ds.z, "covariate"),
    ];
    let mut shapes_ok = true;
    for (name, m, _) in &blocks {
        let ok = m.rows() == n;
        shapes_ok &= ok;
        report.record(
            &format!("rows_{name}"),
            ok,
            if ok {
                format!("{name} has {n} rows")
            } else {
                format!("{name} has {} rows but there are {n} units", m.rows())
            },
        );
    }
    for (name, m) in [("y", &ds.y), ("f", &ds.f)] {
        let ok = m.cols() >= 1;
        report.record(
            &format!("periods_{name}"),
            ok,
            if ok {
                format!("{name} has {} periods", m.cols())
            } else {
                format!("{name} has no periods")
            },
        );
    }
    let names_ok = ds.x_names.len() == ds.x.cols() && ds.z_names.len() == ds.z.cols();
    report.record(
        "covariate_names",
        names_ok,
        if names_ok {
            "covariate names match columns".into()
        } else {
            "covariate name lists do not match covariate column counts".into()
        },
    );

    if shapes_ok {
        for (name, m, axis) in &blocks {
            let mut bad = None;
            'scan: for r in 0..m.rows() {
                for c in 0..m.cols() {
                    if !m.get(r, c).is_finite() {
                        bad = Some((r, c));
                        break 'scan;
                    }
                }
            }
            report.record(
                &format!("finite_{name}"),
                bad.is_none(),
                match bad {
                    None => format!("all {name} entries finite"),
                    Some((r, c)) => format!(
                        "non-finite {name} value at unit '{}' (row {}), {axis} {}",
                        ds.unit_ids[r],
                        r + 1,
                        c + 1
                    ),
                },
            );
        }
    }
    report
}

/// Per-unit time means of both outcome series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitAggregates {
    pub y_bar: Vec<f64>,
    pub f_bar: Vec<f64>,
}

impl UnitAggregates {
    pub fn donors(&self) -> usize {
        self.y_bar.len().saturating_sub(1)
    }
}

pub fn aggregate(ds: &PanelDataset) -> UnitAggregates {
    UnitAggregates {
        y_bar: row_means(&ds.y),
        f_bar: row_means(&ds.f),
    }
}

fn row_means(m: &Matrix) -> Vec<f64> {
    let k = m.cols() as f64;
    m.iter_rows().map(|r| r.iter().sum::<f64>() / k).collect()
}

/// Output of [`normalize_covariates`]: the rescaled dataset plus one warning
/// per constant covariate column.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub dataset: PanelDataset,
    pub warnings: Vec<String>,
}

/// Min-max rescales each covariate column of `x` and `z` to [0, 1] over all
/// units. Constant columns become zeros. Outcomes are untouched.
pub fn normalize_covariates(ds: &PanelDataset, enabled: bool) -> Normalized {
    if !enabled {
        return Normalized {
            dataset: ds.clone(),
            warnings: Vec::new(),
        };
    }
    let mut warnings = Vec::new();
    let x = min_max_columns(&ds.x, &ds.x_names, "target", &mut warnings);
    let z = min_max_columns(&ds.z, &ds.z_names, "reference", &mut warnings);
    Normalized {
        dataset: PanelDataset {
            x,
            z,
            ..ds.clone()
        },
        warnings,
    }
}

fn min_max_columns(m: &Matrix, names: &[String], domain: &str, warnings: &mut Vec<String>) -> Matrix {
    let mut out = m.clone();
    for c in 0..m.cols() {
        let (lo, hi) = (0..m.rows()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            let v = m.get(r, c);
            (lo.min(v), hi.max(v))
        });
        let span = hi - lo;
        if !(span > 0.0) {
            let name = names.get(c).map_or("?", String::as_str);
            warnings.push(format!(
                "{domain} covariate '{name}' is constant across units; mapped to zeros"
            ));
            for r in 0..m.rows() {
                out.set(r, c, 0.0);
            }
            continue;
        }
        for r in 0..m.rows() {
            out.set(r, c, (m.get(r, c) - lo) / span);
        }
    }
    out
}
