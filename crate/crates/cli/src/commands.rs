//! Argument definitions and subcommand bodies.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use panelfusion_core::equi::{
    bias_bound_log_equi, bias_bound_log_equi_refined, bias_bound_synth, LogEquiBoundInputs, SynthBoundInputs,
};
use panelfusion_core::fusion::FusionConfig;
use panelfusion_core::sim::{check_equi_assumptions, BiasExperiment, Design, DgpConfig, Method, ScaledLogDesign};
use panelfusion_core::PanelDataset;
use serde::Serialize;

use crate::config::{effective_fusion, pick, ExperimentFile, FileConfig, FusionFlags};
use crate::error::{CliError, CliResult, EXIT_CODE_HELP, EXIT_OK, EXIT_USAGE};
use crate::io::{export_panel, fmt_f64, load_panel, ReadOptions};
use crate::report::{self, EstimateReport, Inputs, Manifest, PanelSummary};
use crate::runner;

#[derive(Debug, Parser)]
#[command(
    name = "panelfusion",
    version,
    about = "Causal effect estimation from a target panel and a reference panel",
    after_help = EXIT_CODE_HELP
)]
pub struct Cli {
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the effect on the target unit with one or more methods.
    Estimate(EstimateArgs),
    /// Run a simulation experiment on a synthetic panel.
    Simulate(SimulateArgs),
    /// Re-estimate the synthetic fit with every unit in turn as the target.
    Placebo(PlaceboArgs),
    /// Re-run the synthetic fit over a grid of constraint tolerances.
    Sensitivity(SensitivityArgs),
    /// Evaluate a bias bound from its constants.
    Bounds(BoundsArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Long-format outcomes CSV: domain,unit,time,outcome.
    #[arg(long, value_name = "CSV")]
    pub outcomes: Option<PathBuf>,
    /// Wide covariates CSV for the target domain: unit,<covariate>...
    #[arg(long, value_name = "CSV")]
    pub covariates_target: Option<PathBuf>,
    /// Wide covariates CSV for the reference domain.
    #[arg(long, value_name = "CSV")]
    pub covariates_reference: Option<PathBuf>,
    /// Identifier of the treated unit.
    #[arg(long, value_name = "ID")]
    pub target_unit: Option<String>,
    /// Ignore unknown columns and covariate rows of unknown units.
    #[arg(long)]
    pub permissive: bool,
}

#[derive(Debug, Args)]
pub struct FusionArgs {
    /// Relative slack on the reference-covariate fit.
    #[arg(long, value_name = "ETA")]
    pub eta_z: Option<f64>,
    /// Relative slack on the target-covariate fit.
    #[arg(long, value_name = "ETA")]
    pub eta_x: Option<f64>,
    /// Spacing of the budget grid; must divide 1.
    #[arg(long, value_name = "STEP")]
    pub budget_step: Option<f64>,
    /// Use raw covariates instead of rescaling each to [0, 1].
    #[arg(long)]
    pub no_normalize: bool,
}

impl FusionArgs {
    fn flags(&self) -> FusionFlags {
        FusionFlags {
            eta_z: self.eta_z,
            eta_x: self.eta_x,
            budget_step: self.budget_step,
            no_normalize: self.no_normalize,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// linear-eq, log-eq, synth, a comma-separated list, or all.
    #[arg(long, value_name = "METHODS")]
    pub method: Option<String>,
    /// Recorded in the report; estimation itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// bias, assumptions or panel.
    #[arg(long, value_name = "KIND")]
    pub experiment: Option<String>,
    /// factor, additive or scaled-log.
    #[arg(long, value_name = "DESIGN")]
    pub design: Option<String>,
    /// Treatment effect of the additive design.
    #[arg(long)]
    pub effect: Option<f64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Comma-separated reference-period lengths.
    #[arg(long, value_name = "LIST")]
    pub periods: Option<String>,
    #[arg(long)]
    pub donors: Option<usize>,
    /// Master seed of the structural draw.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Methods for the bias experiment (default all).
    #[arg(long, value_name = "METHODS")]
    pub method: Option<String>,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

#[derive(Debug, Args)]
pub struct PlaceboArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fusion: FusionArgs,
    /// Comma-separated tolerances; the grid is their square for (eta_z, eta_x).
    #[arg(long, value_name = "LIST")]
    pub eta_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    /// log, log-refined or synth.
    pub kind: String,
    /// Constants as key=value, e.g. lower_y=1 upper_y=2 donors=30.
    pub params: Vec<String>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
            } else {
                let _ = write!(stdout, "{text}");
            }
            return code;
        }
    };
    let file = match cli.config.as_deref().map(FileConfig::load).transpose() {
        Ok(f) => f.unwrap_or_default(),
        Err(e) => return fail(&e, cli.out.as_deref(), stderr),
    };
    let out = pick(cli.out.clone(), &file.out);
    let ctx = Ctx {
        config_file: cli.config.clone(),
        file,
        out: out.clone(),
    };
    let result = match &cli.command {
        Command::Estimate(a) => estimate(&ctx, a, stdout),
        Command::Simulate(a) => simulate(&ctx, a, stdout),
        Command::Placebo(a) => placebo(&ctx, a, stdout),
        Command::Sensitivity(a) => sensitivity(&ctx, a, stdout),
        Command::Bounds(a) => bounds(&ctx, a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => fail(&e, out.as_deref(), stderr),
    }
}

fn fail(e: &CliError, out: Option<&Path>, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "error: {e}");
    if let Some(dir) = out {
        report::write_error(dir, e);
    }
    e.exit_code()
}

struct Ctx {
    config_file: Option<PathBuf>,
    file: FileConfig,
    out: Option<PathBuf>,
}

impl Ctx {
    fn out_dir(&self) -> CliResult<Option<&Path>> {
        match &self.out {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| CliError::io(d, e))?;
                Ok(Some(d))
            }
            None => Ok(None),
        }
    }

    fn require_out(&self) -> CliResult<&Path> {
        self.out_dir()?
            .ok_or_else(|| CliError::Usage("this command needs an output directory (--out)".into()))
    }

    fn manifest(&self, command: &str) -> Manifest {
        Manifest {
            tool: report::TOOL,
            version: report::VERSION,
            command: command.to_string(),
            config_file: self.config_file.clone(),
            inputs: Inputs::default(),
            target_unit: None,
            methods: Vec::new(),
            seed: None,
            permissive: false,
            fusion: None,
        }
    }

    /// Loads the panel and fills the data fields of `m`.
    fn panel(&self, a: &DataArgs, m: &mut Manifest) -> CliResult<PanelDataset> {
        let f = &self.file;
        let outcomes = pick(a.outcomes.clone(), &f.outcomes)
            .ok_or_else(|| CliError::Usage("missing --outcomes".into()))?;
        let target = pick(a.target_unit.clone(), &f.target_unit)
            .ok_or_else(|| CliError::Usage("missing --target-unit".into()))?;
        let cov_t = pick(a.covariates_target.clone(), &f.covariates_target);
        let cov_r = pick(a.covariates_reference.clone(), &f.covariates_reference);
        let permissive = a.permissive || f.permissive.unwrap_or(false);
        let ds = load_panel(
            &outcomes,
            cov_t.as_deref(),
            cov_r.as_deref(),
            &target,
            ReadOptions { permissive },
        )?;
        m.inputs = Inputs {
            outcomes: Some(outcomes),
            covariates_target: cov_t,
            covariates_reference: cov_r,
        };
        m.target_unit = Some(target);
        m.permissive = permissive;
        Ok(ds)
    }
}

pub fn parse_methods(s: &str) -> CliResult<Vec<Method>> {
    if s.trim() == "all" {
        return Ok(Method::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let m = Method::parse(part).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown method `{part}` (expected linear-eq, log-eq, synth or all)"
            ))
        })?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .map(|p| {
            p.parse()
                .map_err(|_| CliError::Usage(format!("{what}: cannot parse `{p}`")))
        })
        .collect()
}

fn estimate(ctx: &Ctx, a: &EstimateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut manifest = ctx.manifest("estimate");
    let methods = parse_methods(
        &pick(a.method.clone(), &ctx.file.method).unwrap_or_else(|| "all".into()),
    )?;
    let fusion = effective_fusion(&ctx.file, &a.fusion.flags())?;
    manifest.methods = methods.clone();
    manifest.seed = pick(a.seed, &ctx.file.seed);
    manifest.fusion = methods.contains(&Method::Synth).then_some(fusion);
    let ds = ctx.panel(&a.data, &mut manifest)?;

    let mut estimates = Vec::new();
    let mut gaps = Vec::new();
    let mut warnings = Vec::new();
    for m in &methods {
        let out = match m {
            Method::Synth => report::synth_output(&ds, runner::fusion(&ds, &fusion)?),
            _ => report::equi_output(&ds, *m)?,
        };
        for w in &out.warnings {
            warnings.push(format!("{}: {w}", m.label()));
        }
        gaps.extend(out.gaps);
        estimates.push(out.report);
    }
    for e in &estimates {
        report::print_line(
            &mut *stdout,
            &format!("{:<10} psi_hat = {}  ({} pp)", e.method.label(), fmt_f64(e.psi_hat), fmt_f64(e.psi_hat_pp)),
        );
    }
    for w in &warnings {
        report::print_line(&mut *stdout, &format!("warning: {w}"));
    }
    if let Some(dir) = ctx.out_dir()? {
        let rep = EstimateReport {
            manifest,
            panel: PanelSummary::of(&ds),
            estimates,
            warnings,
        };
        report::write_json(&dir.join("report.json"), &rep)?;
        report::write_gaps(&dir.join("gaps.csv"), &gaps)?;
    }
    Ok(())
}

fn parse_design(name: &str, effect: f64) -> CliResult<Design> {
    match name {
        "factor" => Ok(Design::FactorModel),
        "additive" => Ok(Design::Additive { effect }),
        "scaled-log" => Ok(Design::ScaledLog(ScaledLogDesign::default())),
        _ => Err(CliError::Usage(format!(
            "unknown design `{name}` (expected factor, additive or scaled-log)"
        ))),
    }
}

#[derive(Serialize)]
struct SimulateSettings {
    experiment: String,
    design: Design,
    dgp: DgpConfig,
    replicates: Option<usize>,
    periods: Option<Vec<usize>>,
}

fn simulate(ctx: &Ctx, a: &SimulateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let dir = ctx.require_out()?;
    let xf = ctx.file.experiment.clone().unwrap_or_default();
    let ExperimentFile {
        kind,
        design,
        effect,
        replicates,
        periods,
        methods,
    } = xf;
    let kind = pick(a.experiment.clone(), &kind).unwrap_or_else(|| "bias".into());
    let effect = pick(a.effect, &effect).unwrap_or(1.0);
    let design = parse_design(&pick(a.design.clone(), &design).unwrap_or_else(|| "factor".into()), effect)?;
    let mut dgp = ctx.file.dgp.clone().unwrap_or_default();
    if let Some(j) = a.donors {
        dgp.donors = j;
    }
    if let Some(s) = pick(a.seed, &ctx.file.seed) {
        dgp.master_seed = s;
    }
    let periods = match &a.periods {
        Some(s) => Some(parse_list::<usize>(s, "--periods")?),
        None => periods,
    };
    let replicates = pick(a.replicates, &replicates);
    let mut manifest = ctx.manifest("simulate");
    manifest.seed = Some(dgp.master_seed);

    #[derive(Serialize)]
    struct Out<'a, T: Serialize> {
        manifest: &'a Manifest,
        settings: &'a SimulateSettings,
        #[serde(flatten)]
        result: T,
    }

    match kind.as_str() {
        "bias" => {
            let methods = match &a.method {
                Some(s) => parse_methods(s)?,
                None => match methods {
                    Some(v) => parse_methods(&v.join(","))?,
                    None => Method::ALL.to_vec(),
                },
            };
            let fusion = effective_fusion(&ctx.file, &a.fusion.flags())?;
            let periods = periods.unwrap_or_else(|| (1..=10).map(|k| 10 * k).collect());
            let replicates = replicates.unwrap_or(300);
            manifest.methods = methods.clone();
            manifest.fusion = methods.contains(&Method::Synth).then_some(fusion);
            let exp = BiasExperiment {
                dgp: dgp.clone(),
                design,
                periods: periods.clone(),
                replicates,
                methods: methods.clone(),
                fusion,
            };
            let table = runner::bias(&exp)?;
            report::write_bias(dir, &table)?;
            #[derive(Serialize)]
            struct Decay {
                method: Method,
                spearman_abs_bias_vs_periods: f64,
            }
            #[derive(Serialize)]
            struct R<'a> {
                summary: &'a [panelfusion_core::sim::BiasSummary],
                decay: Vec<Decay>,
            }
            let decay: Vec<Decay> = methods
                .iter()
                .map(|&m| Decay {
                    method: m,
                    spearman_abs_bias_vs_periods: table.decay_correlation(m),
                })
                .collect();
            for s in &table.summary {
                report::print_line(
                    &mut *stdout,
                    &format!(
                        "T={:<4} {:<10} mean bias {:>12}  se {:>10}  ok {}/{}",
                        s.periods,
                        s.method.label(),
                        format!("{:.4}", s.mean_bias),
                        format!("{:.4}", s.std_error),
                        s.successes,
                        s.successes + s.failures
                    ),
                );
            }
            let settings = SimulateSettings {
                experiment: kind.clone(),
                design,
                dgp: dgp.clone(),
                replicates: Some(replicates),
                periods: Some(periods),
            };
            report::write_json(
                &dir.join("summary.json"),
                &Out {
                    manifest: &manifest,
                    settings: &settings,
                    result: R {
                        summary: &table.summary,
                        decay,
                    },
                },
            )
        }
        "assumptions" => {
            let replicates = replicates.unwrap_or(200);
            let rep = check_equi_assumptions(&dgp, &design, replicates)?;
            report::print_line(
                &mut *stdout,
                &format!(
                    "linear discrepancy {:.4} (se {:.4}); log discrepancy {:.4} (se {:.4})",
                    rep.linear_discrepancy, rep.linear_std_error, rep.log_discrepancy, rep.log_std_error
                ),
            );
            report::write_assumptions(dir, &manifest, &rep)
        }
        "panel" => {
            if let Some(p) = periods {
                match p.as_slice() {
                    [t] => dgp.reference_periods = *t,
                    _ => return Err(CliError::Usage("panel export takes a single --periods value".into())),
                }
            }
            let sim = design.generate(&dgp)?;
            let files = export_panel(&sim.dataset, dir)?;
            #[derive(Serialize)]
            struct Truth<'a> {
                target_unit: &'a str,
                psi0: f64,
                alpha: &'a [f64],
                outcomes: PathBuf,
            }
            let settings = SimulateSettings {
                experiment: kind.clone(),
                design,
                dgp: dgp.clone(),
                replicates: None,
                periods: None,
            };
            report::print_line(
                &mut *stdout,
                &format!("wrote {} (psi0 = {})", files.outcomes.display(), fmt_f64(sim.psi0)),
            );
            report::write_json(
                &dir.join("truth.json"),
                &Out {
                    manifest: &manifest,
                    settings: &settings,
                    result: Truth {
                        target_unit: &sim.dataset.unit_ids[0],
                        psi0: sim.psi0,
                        alpha: &sim.alpha,
                        outcomes: files.outcomes.file_name().map(PathBuf::from).unwrap_or_default(),
                    },
                },
            )
        }
        other => Err(CliError::Usage(format!(
            "unknown experiment `{other}` (expected bias, assumptions or panel)"
        ))),
    }
}

fn placebo(ctx: &Ctx, a: &PlaceboArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut manifest = ctx.manifest("placebo");
    let fusion = effective_fusion(&ctx.file, &a.fusion.flags())?;
    manifest.methods = vec![Method::Synth];
    manifest.fusion = Some(fusion);
    let ds = ctx.panel(&a.data, &mut manifest)?;
    let table = runner::placebo(&ds, &fusion)?;
    let target = table.runs.iter().find(|r| r.is_target);
    report::print_line(
        &mut *stdout,
        &format!(
            "target |psi_hat| rank {} of {} successful runs",
            table.target_rank.map_or_else(|| "n/a".into(), |r| r.to_string()),
            table.successful_runs
        ),
    );
    if let Some(dir) = ctx.out_dir()? {
        report::write_placebo(dir, &table)?;
        #[derive(Serialize)]
        struct Out<'a> {
            manifest: &'a Manifest,
            target_unit: &'a str,
            target_psi_hat: Option<f64>,
            target_rank: Option<usize>,
            successful_runs: usize,
            units: usize,
            median_placebo_reference_gap: f64,
        }
        report::write_json(
            &dir.join("placebo.json"),
            &Out {
                manifest: &manifest,
                target_unit: &ds.unit_ids[0],
                target_psi_hat: target.and_then(|r| r.psi_hat),
                target_rank: table.target_rank,
                successful_runs: table.successful_runs,
                units: table.runs.len(),
                median_placebo_reference_gap: table.median_placebo_reference_gap(),
            },
        )?;
    }
    Ok(())
}

fn sensitivity(ctx: &Ctx, a: &SensitivityArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let mut manifest = ctx.manifest("sensitivity");
    let fusion: FusionConfig = effective_fusion(&ctx.file, &a.fusion.flags())?;
    let values = match &a.eta_grid {
        Some(s) => parse_list::<f64>(s, "--eta-grid")?,
        None => ctx
            .file
            .sensitivity
            .as_ref()
            .and_then(|s| s.eta_values.clone())
            .unwrap_or_else(|| vec![0.05, 0.1, 0.2]),
    };
    if values.iter().any(|v| !(*v >= 0.0)) {
        return Err(CliError::Usage("tolerances must be nonnegative".into()));
    }
    let grid: Vec<(f64, f64)> = values
        .iter()
        .flat_map(|&z| values.iter().map(move |&x| (z, x)))
        .collect();
    manifest.methods = vec![Method::Synth];
    manifest.fusion = Some(fusion);
    let ds = ctx.panel(&a.data, &mut manifest)?;
    let rows = runner::sensitivity(&ds, &fusion, &grid)?;
    let psis: Vec<f64> = rows.iter().filter_map(|r| r.psi_hat).collect();
    let spread = psis.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - psis.iter().cloned().fold(f64::INFINITY, f64::min);
    for r in &rows {
        report::print_line(
            &mut *stdout,
            &format!(
                "eta_z={:<6} eta_x={:<6} {}",
                fmt_f64(r.eta_z),
                fmt_f64(r.eta_x),
                r.psi_hat.map_or_else(|| "infeasible".to_string(), |p| format!("psi_hat = {}", fmt_f64(p)))
            ),
        );
    }
    if let Some(dir) = ctx.out_dir()? {
        report::write_sensitivity(&dir.join("sensitivity.csv"), &rows)?;
        #[derive(Serialize)]
        struct Out<'a> {
            manifest: &'a Manifest,
            eta_values: &'a [f64],
            feasible_points: usize,
            psi_hat_spread: Option<f64>,
            rows: &'a [panelfusion_core::fusion::SensitivityRow],
        }
        report::write_json(
            &dir.join("sensitivity.json"),
            &Out {
                manifest: &manifest,
                eta_values: &values,
                feasible_points: psis.len(),
                psi_hat_spread: (!psis.is_empty()).then_some(spread),
                rows: &rows,
            },
        )?;
    }
    Ok(())
}

/// `key=value` pairs as a JSON object; integers stay integers so count fields
/// deserialize.
fn params_object(params: &[String]) -> CliResult<serde_json::Value> {
    let mut map = serde_json::Map::new();
    for p in params {
        let (k, v) = p
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected key=value, got `{p}`")))?;
        let value = if let Ok(n) = v.parse::<u64>() {
            serde_json::Value::from(n)
        } else {
            let x: f64 = v
                .parse()
                .map_err(|_| CliError::Usage(format!("{k}: `{v}` is not a number")))?;
            serde_json::Value::from(x)
        };
        if map.insert(k.to_string(), value).is_some() {
            return Err(CliError::Usage(format!("{k} given twice")));
        }
    }
    Ok(serde_json::Value::Object(map))
}

fn bounds(ctx: &Ctx, a: &BoundsArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let obj = params_object(&a.params)?;
    let decode = |e: serde_json::Error| CliError::Usage(format!("bound constants: {e}"));
    let (inputs, bound) = match a.kind.as_str() {
        "log" | "log-refined" => {
            let mut obj = obj;
            if let serde_json::Value::Object(m) = &mut obj {
                m.entry("tau1").or_insert(serde_json::Value::Null);
            }
            let inp: LogEquiBoundInputs = serde_json::from_value(obj).map_err(decode)?;
            let b = if a.kind == "log" {
                bias_bound_log_equi(&inp)?
            } else {
                bias_bound_log_equi_refined(&inp)?
            };
            (serde_json::to_value(inp).expect("plain struct"), b)
        }
        "synth" => {
            let inp: SynthBoundInputs = serde_json::from_value(obj).map_err(decode)?;
            (serde_json::to_value(inp).expect("plain struct"), bias_bound_synth(&inp)?)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown bound `{other}` (expected log, log-refined or synth)"
            )))
        }
    };
    report::print_line(&mut *stdout, &fmt_f64(bound));
    if let Some(dir) = ctx.out_dir()? {
        #[derive(Serialize)]
        struct Out<'a> {
            tool: &'static str,
            version: &'static str,
            kind: &'a str,
            inputs: serde_json::Value,
            bound: f64,
        }
        report::write_json(
            &dir.join("bound.json"),
            &Out {
                tool: report::TOOL,
                version: report::VERSION,
                kind: &a.kind,
                inputs,
                bound,
            },
        )?;
    }
    Ok(())
}
