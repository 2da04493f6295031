use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dgp::{Design, DgpConfig, SimulatedPanel};
use crate::equi::{estimate_linear_equi, estimate_log_equi};
use crate::error::{Error, Result};
use crate::fusion::{run_fusion, FusionConfig, FusionResult};
use crate::matrix::Matrix;
use crate::panel::{aggregate, PanelDataset};
use crate::solver::nse;
use crate::stats;

/// Estimator selector shared by the experiment runners and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "linear-eq")]
    LinearEqui,
    #[serde(rename = "log-eq")]
    LogEqui,
    #[serde(rename = "synth")]
    Synth,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LinearEqui, Method::LogEqui, Method::Synth];

    pub fn label(self) -> &'static str {
        match self {
            Method::LinearEqui => "linear-eq",
            Method::LogEqui => "log-eq",
            Method::Synth => "synth",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.label() == s)
    }

    /// Point estimate on one dataset.
    pub fn estimate(self, ds: &PanelDataset, fusion: &FusionConfig) -> Result<f64> {
        match self {
            Method::LinearEqui => estimate_linear_equi(&aggregate(ds)).map(|e| e.psi_hat),
            Method::LogEqui => estimate_log_equi(&aggregate(ds)).map(|e| e.psi_hat),
            Method::Synth => run_fusion(ds, fusion).map(|r| r.psi_hat),
        }
    }
}

/// Bias-versus-T experiment: replicates share the structural draw and differ
/// in noise; every replicate is generated once at the longest horizon and
/// truncated for shorter ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasExperiment {
    pub dgp: DgpConfig,
    pub design: Design,
    pub periods: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
    pub fusion: FusionConfig,
}

impl BiasExperiment {
    pub fn check(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Precondition("the bias experiment needs M >= 1".into()));
        }
        if self.periods.is_empty() || self.periods.contains(&0) {
            return Err(Error::Precondition("period grid must be non-empty with T >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Precondition("no estimator selected".into()));
        }
        self.dgp.check()?;
        self.fusion.check()
    }

    fn replicate_config(&self, m: u64) -> DgpConfig {
        let mut cfg = self.dgp.clone();
        cfg.replicate = m;
        cfg.reference_periods = self.periods.iter().copied().max().unwrap_or(1);
        cfg
    }

    /// All rows of replicate `m` (1-based), in period-grid then method order.
    pub fn run_replicate(&self, m: u64) -> Vec<BiasRow> {
        let cfg = self.replicate_config(m);
        let panel = match self.design.generate(&cfg) {
            Ok(p) => p,
            Err(e) => {
                return self
                    .periods
                    .iter()
                    .flat_map(|&t| self.methods.iter().map(move |&method| (t, method)))
                    .map(|(t, method)| BiasRow::failed(m, t, method, f64::NAN, &e))
                    .collect();
            }
        };
        let mut rows = Vec::with_capacity(self.periods.len() * self.methods.len());
        for &t in &self.periods {
            let ds = panel.dataset.truncate_reference(t);
            for &method in &self.methods {
                rows.push(match method.estimate(&ds, &self.fusion) {
                    Ok(est) => BiasRow {
                        replicate: m,
                        periods: t,
                        method,
                        estimate: est,
                        psi0: panel.psi0,
                        bias: est - panel.psi0,
                        error: None,
                    },
                    Err(e) => BiasRow::failed(m, t, method, panel.psi0, &e),
                });
            }
        }
        rows
    }
}

/// One tidy output row: `(replicate, T, method, estimate, psi0, bias)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub replicate: u64,
    pub periods: usize,
    pub method: Method,
    pub estimate: f64,
    pub psi0: f64,
    pub bias: f64,
    pub error: Option<String>,
}

impl BiasRow {
    fn failed(replicate: u64, periods: usize, method: Method, psi0: f64, e: &Error) -> Self {
        BiasRow {
            replicate,
            periods,
            method,
            estimate: f64::NAN,
            psi0,
            bias: f64::NAN,
            error: Some(e.to_string()),
        }
    }
}

/// Aggregates for one `(T, method)` cell over the replicates that succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub periods: usize,
    pub method: Method,
    pub mean_bias: f64,
    pub mean_abs_bias: f64,
    pub bias_q25: f64,
    pub bias_q75: f64,
    pub std_error: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub rows: Vec<BiasRow>,
    pub summary: Vec<BiasSummary>,
}

impl BiasTable {
    /// Builds the summary from rows produced in any order. Rows are sorted by
    /// (replicate, T, method) so the table is independent of scheduling.
    pub fn from_rows(exp: &BiasExperiment, mut rows: Vec<BiasRow>) -> BiasTable {
        rows.sort_by(|a, b| {
            (a.replicate, a.periods, a.method).cmp(&(b.replicate, b.periods, b.method))
        });
        let mut summary = Vec::new();
        for &t in &exp.periods {
            for &method in &exp.methods {
                let cell: Vec<&BiasRow> = rows.iter().filter(|r| r.periods == t && r.method == method).collect();
                let biases: Vec<f64> = cell.iter().filter(|r| r.error.is_none()).map(|r| r.bias).collect();
                let abs: Vec<f64> = biases.iter().map(|b| b.abs()).collect();
                let (q25, q75) = stats::iqr(&biases);
                summary.push(BiasSummary {
                    periods: t,
                    method,
                    mean_bias: stats::mean(&biases),
                    mean_abs_bias: stats::mean(&abs),
                    bias_q25: q25,
                    bias_q75: q75,
                    std_error: stats::std_error(&biases),
                    successes: biases.len(),
                    failures: cell.len() - biases.len(),
                });
            }
        }
        BiasTable { rows, summary }
    }

    pub fn cell(&self, periods: usize, method: Method) -> Option<&BiasSummary> {
        self.summary.iter().find(|s| s.periods == periods && s.method == method)
    }

    /// Spearman correlation between T and `|mean bias|` for one method.
    pub fn decay_correlation(&self, method: Method) -> f64 {
        let (t, b): (Vec<f64>, Vec<f64>) = self
            .summary
            .iter()
            .filter(|s| s.method == method)
            .map(|s| (s.periods as f64, s.mean_bias.abs()))
            .unzip();
        stats::spearman(&t, &b)
    }
}

/// Serial runner; replicate `m` uses noise seed `master_seed ^ m` for `m = 1..=M`.
pub fn run_bias_experiment(exp: &BiasExperiment) -> Result<BiasTable> {
    exp.check()?;
    let rows = (1..=exp.replicates as u64).flat_map(|m| exp.run_replicate(m)).collect();
    Ok(BiasTable::from_rows(exp, rows))
}

/// One run of the placebo test with `unit` (row index in the original data)
/// as the pseudo-target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRun {
    pub unit: usize,
    pub unit_id: String,
    pub is_target: bool,
    pub psi_hat: Option<f64>,
    pub gap_target: Vec<f64>,
    pub gap_reference: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboTable {
    pub runs: Vec<PlaceboRun>,
    /// Rank of the true target's `|psi_hat|` among the successful runs, 1 for
    /// the largest. Ties count against the target.
    pub target_rank: Option<usize>,
    pub successful_runs: usize,
}

pub fn placebo_run(ds: &PanelDataset, cfg: &FusionConfig, unit: usize) -> PlaceboRun {
    let shifted = ds.with_target(unit);
    let outcome: Result<FusionResult> = run_fusion(&shifted, cfg);
    let unit_id = ds.unit_ids[unit].clone();
    match outcome {
        Ok(r) => PlaceboRun {
            unit,
            unit_id,
            is_target: unit == 0,
            psi_hat: Some(r.psi_hat),
            gap_target: r.gap_target,
            gap_reference: r.gap_reference,
            error: None,
        },
        Err(e) => PlaceboRun {
            unit,
            unit_id,
            is_target: unit == 0,
            psi_hat: None,
            gap_target: Vec::new(),
            gap_reference: Vec::new(),
            error: Some(e.to_string()),
        },
    }
}

pub fn check_placebo(ds: &PanelDataset) -> Result<()> {
    if ds.donors() < 2 {
        return Err(Error::Precondition(format!(
            "the placebo test needs at least 2 donors, found {}",
            ds.donors()
        )));
    }
    ds.ensure_valid()
}

impl PlaceboTable {
    pub fn from_runs(mut runs: Vec<PlaceboRun>) -> PlaceboTable {
        runs.sort_by_key(|r| r.unit);
        let target = runs.iter().find(|r| r.is_target).and_then(|r| r.psi_hat);
        let ok: Vec<f64> = runs.iter().filter_map(|r| r.psi_hat).collect();
        let target_rank = target.map(|t| ok.iter().filter(|v| v.abs() >= t.abs()).count());
        PlaceboTable {
            successful_runs: ok.len(),
            runs,
            target_rank,
        }
    }

    /// Median over donor runs of the per-run mean reference-domain gap.
    pub fn median_placebo_reference_gap(&self) -> f64 {
        let v: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| !r.is_target && r.error.is_none())
            .map(|r| stats::mean(&r.gap_reference))
            .collect();
        stats::median(&v)
    }
}

/// Reruns the fusion with every unit in turn as the target, serially.
pub fn run_placebo(ds: &PanelDataset, cfg: &FusionConfig) -> Result<PlaceboTable> {
    check_placebo(ds)?;
    cfg.check()?;
    let runs = (0..ds.unit_ids.len()).map(|u| placebo_run(ds, cfg, u)).collect();
    Ok(PlaceboTable::from_runs(runs))
}

/// One point of a two-domain assumption plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionPoint {
    /// `linear` or `log`.
    pub scale: String,
    /// `reference` or `target`.
    pub domain: String,
    /// `target` or `donor_mean`.
    pub group: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub replicates: usize,
    /// `(E[Y1] - E[Y0]) - (E[F1] - E[F0])`, expectations by Monte Carlo.
    pub linear_discrepancy: f64,
    pub linear_std_error: f64,
    /// `(log E[Y1] - log E[Y0]) - (log E[F1] - log E[F0])`.
    pub log_discrepancy: f64,
    pub log_std_error: f64,
    pub points: Vec<AssumptionPoint>,
}

/// Monte Carlo check of both equi-confounding assumptions on untreated
/// outcomes. Replicates `1..=replicates` share the structural draw of `cfg`.
pub fn check_equi_assumptions(cfg: &DgpConfig, design: &Design, replicates: usize) -> Result<AssumptionReport> {
    if replicates < 2 {
        return Err(Error::Precondition("need at least 2 replicates for a standard error".into()));
    }
    let mut means = Vec::with_capacity(replicates);
    for m in 1..=replicates as u64 {
        let mut c = cfg.clone();
        c.replicate = m;
        means.push(domain_means(&design.generate(&c)?));
    }
    let avg = |k: usize| stats::mean(&means.iter().map(|v| v[k]).collect::<Vec<_>>());
    let [y1, y0, f1, f0] = [avg(0), avg(1), avg(2), avg(3)];
    let lin: Vec<f64> = means.iter().map(|v| (v[0] - v[1]) - (v[2] - v[3])).collect();
    let logs: Vec<f64> = means
        .iter()
        .map(|v| (libm::log(v[0]) - libm::log(v[1])) - (libm::log(v[2]) - libm::log(v[3])))
        .collect();
    let mut points = Vec::with_capacity(8);
    for (scale, tr) in [("linear", (|v| v) as fn(f64) -> f64), ("log", libm::log)] {
        for (domain, group, value) in [
            ("reference", "target", f1),
            ("reference", "donor_mean", f0),
            ("target", "target", y1),
            ("target", "donor_mean", y0),
        ] {
            points.push(AssumptionPoint {
                scale: scale.into(),
                domain: domain.into(),
                group: group.into(),
                value: tr(value),
            });
        }
    }
    Ok(AssumptionReport {
        replicates,
        linear_discrepancy: (y1 - y0) - (f1 - f0),
        linear_std_error: stats::std_error(&lin),
        log_discrepancy: (libm::log(y1) - libm::log(y0)) - (libm::log(f1) - libm::log(f0)),
        log_std_error: stats::std_error(&logs),
        points,
    })
}

/// `[Y1(0) mean, donor Y mean, F1 mean, donor F mean]` of one panel.
fn domain_means(p: &SimulatedPanel) -> [f64; 4] {
    let ds = &p.dataset;
    let unit_mean = |m: &Matrix, i: usize| stats::mean(m.row(i));
    let donors = ds.donors();
    let donor_mean = |m: &Matrix| (1..=donors).map(|i| unit_mean(m, i)).sum::<f64>() / donors as f64;
    [
        unit_mean(&p.counterfactual_y0, 0),
        donor_mean(&p.counterfactual_y0),
        unit_mean(&ds.f, 0),
        donor_mean(&ds.f),
    ]
}

/// NSE between the target's latent factors and a donor combination, for the
/// fitted weights and for uniform weights. Requires `d_u >= 1`.
pub fn latent_match(p: &SimulatedPanel, weights: &[f64]) -> Result<(f64, f64)> {
    let mu = &p.latent_mu;
    let donors = mu.select_rows(&(1..mu.rows()).collect::<Vec<_>>());
    let target = mu.row(0);
    let fitted = nse(target, &donors, weights)?;
    let uniform = alloc::vec![1.0 / donors.rows() as f64; donors.rows()];
    Ok((fitted, nse(target, &donors, &uniform)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_exp(methods: Vec<Method>) -> BiasExperiment {
        BiasExperiment {
            dgp: DgpConfig {
                donors: 8,
                master_seed: 5,
                ..DgpConfig::default()
            },
            design: Design::FactorModel,
            periods: vec![10, 20],
            replicates: 1,
            methods,
            fusion: FusionConfig {
                budget_grid_step: 0.25,
                ..FusionConfig::default()
            },
        }
    }

    #[test]
    fn single_replicate_row_is_estimate_minus_psi0() {
        let exp = small_exp(Method::ALL.to_vec());
        let table = run_bias_experiment(&exp).unwrap();
        assert_eq!(table.rows.len(), 6);
        let mut cfg = exp.dgp.clone();
        cfg.replicate = 1;
        cfg.reference_periods = 20;
        let p = generate_dgp_for_test(&cfg);
        for row in &table.rows {
            let ds = p.dataset.truncate_reference(row.periods);
            let est = row.method.estimate(&ds, &exp.fusion).unwrap();
            assert_eq!(row.estimate, est);
            assert_eq!(row.bias, est - p.psi0);
            let cell = table.cell(row.periods, row.method).unwrap();
            assert_eq!(cell.mean_bias, row.bias);
            assert_eq!(cell.successes, 1);
        }
    }

    fn generate_dgp_for_test(cfg: &DgpConfig) -> SimulatedPanel {
        super::super::generate_dgp(cfg).unwrap()
    }

    #[test]
    fn failures_are_counted_not_aggregated() {
        let mut exp = small_exp(vec![Method::LogEqui, Method::LinearEqui]);
        // negative reference outcomes make the log estimator fail
        exp.dgp.intercept_range_ref = (-500.0, -400.0);
        exp.replicates = 2;
        let table = run_bias_experiment(&exp).unwrap();
        let log = table.cell(10, Method::LogEqui).unwrap();
        assert_eq!((log.successes, log.failures), (0, 2));
        assert!(log.mean_bias.is_nan());
        let lin = table.cell(10, Method::LinearEqui).unwrap();
        assert_eq!((lin.successes, lin.failures), (2, 0));
    }

    #[test]
    fn rejects_empty_inputs() {
        let mut exp = small_exp(vec![Method::LinearEqui]);
        exp.replicates = 0;
        assert!(run_bias_experiment(&exp).is_err());
        exp.replicates = 1;
        exp.methods.clear();
        assert!(run_bias_experiment(&exp).is_err());
    }

    #[test]
    fn method_labels_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.label()), Some(m));
        }
        assert_eq!(Method::parse("sc"), None);
    }

    #[test]
    fn symmetric_null_placebo_is_flat() {
        let row = vec![1.0, 2.0, 3.0];
        let f = Matrix::from_rows(&vec![row; 4]).unwrap();
        let y = Matrix::from_rows(&vec![vec![4.0, 4.5]; 4]).unwrap();
        let z = Matrix::from_rows(&vec![vec![0.3]; 4]).unwrap();
        let ds = PanelDataset::new(
            (0..4).map(|i| format!("u{i}")).collect(),
            y,
            f,
            Matrix::empty_cols(4),
            z,
        );
        let cfg = FusionConfig {
            budget_grid_step: 0.5,
            ..FusionConfig::default()
        };
        let table = run_placebo(&ds, &cfg).unwrap();
        assert_eq!(table.runs.len(), 4);
        for r in &table.runs {
            assert!(r.gap_target.iter().chain(&r.gap_reference).all(|g| *g == 0.0));
        }
    }

    #[test]
    fn placebo_needs_two_donors() {
        let ds = PanelDataset::new(
            vec!["a".into(), "b".into()],
            Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
            Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap(),
            Matrix::empty_cols(2),
            Matrix::empty_cols(2),
        );
        assert!(matches!(run_placebo(&ds, &FusionConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn rank_counts_ties_against_target() {
        let run = |unit, psi: f64| PlaceboRun {
            unit,
            unit_id: format!("u{unit}"),
            is_target: unit == 0,
            psi_hat: Some(psi),
            gap_target: vec![psi],
            gap_reference: vec![0.0],
            error: None,
        };
        let t = PlaceboTable::from_runs(vec![run(2, -3.0), run(0, 3.0), run(1, 1.0)]);
        assert_eq!(t.target_rank, Some(2));
        assert_eq!(t.runs[0].unit, 0);
        let t = PlaceboTable::from_runs(vec![run(0, 5.0), run(1, 1.0)]);
        assert_eq!(t.target_rank, Some(1));
    }

    #[test]
    fn additive_assumption_holds() {
        let cfg = DgpConfig {
            donors: 10,
            reference_periods: 10,
            master_seed: 2,
            ..DgpConfig::default()
        };
        let rep = check_equi_assumptions(&cfg, &Design::Additive { effect: 1.0 }, 200).unwrap();
        assert!(rep.linear_discrepancy.abs() < 4.0 * rep.linear_std_error + 1e-12);
        assert_eq!(rep.points.len(), 8);
    }
}
