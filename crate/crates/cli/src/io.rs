//! CSV ingestion and export.
//!
//! Outcomes come in long format, one row per `(domain, unit, time)`:
//!
//! ```text
//! domain,unit,time,outcome
//! target,Chelsea,1,0.61
//! reference,Chelsea,1,0.48
//! ```
//!
//! `domain` is `target` or `reference`, `time` is a 1-based integer and every
//! unit must carry every period of both domains. Covariates come in one wide
//! file per domain: a `unit` column followed by one numeric column per
//! covariate.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use panelfusion_core::{Matrix, PanelDataset};

use crate::error::{CliError, CliResult};

const OUTCOME_COLUMNS: [&str; 4] = ["domain", "unit", "time", "outcome"];

#[derive(Debug, Clone, Copy, Default)]
pub struct ReadOptions {
    /// Ignore unknown columns in the outcomes file and covariate rows for
    /// units absent from the outcomes file.
    pub permissive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Domain {
    Target,
    Reference,
}

#[derive(Debug, Clone)]
pub struct OutcomeRows {
    source: PathBuf,
    /// Units in order of first appearance.
    units: Vec<String>,
    cells: HashMap<(Domain, usize), BTreeMap<u32, f64>>,
}

#[derive(Debug, Clone)]
pub struct CovariateTable {
    source: PathBuf,
    pub names: Vec<String>,
    pub rows: HashMap<String, Vec<f64>>,
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

pub fn read_outcomes(path: &Path, opts: ReadOptions) -> CliResult<OutcomeRows> {
    parse_outcomes(open(path)?, path, opts)
}

pub fn parse_outcomes<R: Read>(reader: R, source: &Path, opts: ReadOptions) -> CliResult<OutcomeRows> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::parse(source, e.to_string()))?
        .clone();
    let mut idx = [usize::MAX; 4];
    for (pos, h) in headers.iter().enumerate() {
        match OUTCOME_COLUMNS.iter().position(|c| *c == h) {
            Some(k) if idx[k] != usize::MAX => {
                return Err(CliError::parse(source, format!("duplicate column `{h}`")));
            }
            Some(k) => idx[k] = pos,
            None if opts.permissive => {}
            None => {
                return Err(CliError::parse(
                    source,
                    format!("unknown column `{h}`; expected domain,unit,time,outcome (use --permissive to ignore)"),
                ))
            }
        }
    }
    if let Some(k) = idx.iter().position(|&i| i == usize::MAX) {
        return Err(CliError::parse(source, format!("missing column `{}`", OUTCOME_COLUMNS[k])));
    }

    let mut out = OutcomeRows {
        source: source.to_path_buf(),
        units: Vec::new(),
        cells: HashMap::new(),
    };
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let line = line + 2;
        let rec = rec.map_err(|e| CliError::parse(source, e.to_string()))?;
        let field = |k: usize| rec.get(idx[k]).unwrap_or("");
        let domain = match field(0) {
            "target" => Domain::Target,
            "reference" => Domain::Reference,
            other => {
                return Err(CliError::parse(
                    source,
                    format!("line {line}: domain `{other}` is neither target nor reference"),
                ))
            }
        };
        let unit = field(1);
        if unit.is_empty() {
            return Err(CliError::parse(source, format!("line {line}: empty unit label")));
        }
        let time: u32 = field(2)
            .parse()
            .ok()
            .filter(|t| *t >= 1)
            .ok_or_else(|| CliError::parse(source, format!("line {line}: time `{}` is not a positive integer", field(2))))?;
        let value: f64 = field(3)
            .parse()
            .map_err(|_| CliError::parse(source, format!("line {line}: outcome `{}` is not a number", field(3))))?;
        let u = *unit_index.entry(unit.to_string()).or_insert_with(|| {
            out.units.push(unit.to_string());
            out.units.len() - 1
        });
        if out.cells.entry((domain, u)).or_default().insert(time, value).is_some() {
            return Err(CliError::Panel(format!(
                "{}: line {line}: duplicate row for unit `{unit}`, {} period {time}",
                source.display(),
                domain_name(domain)
            )));
        }
    }
    if out.units.is_empty() {
        return Err(CliError::Panel(format!("{}: no data rows", source.display())));
    }
    Ok(out)
}

fn domain_name(d: Domain) -> &'static str {
    match d {
        Domain::Target => "target",
        Domain::Reference => "reference",
    }
}

pub fn read_covariates(path: &Path) -> CliResult<CovariateTable> {
    parse_covariates(open(path)?, path)
}

pub fn parse_covariates<R: Read>(reader: R, source: &Path) -> CliResult<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::parse(source, e.to_string()))?
        .clone();
    let unit_col = headers
        .iter()
        .position(|h| h == "unit")
        .ok_or_else(|| CliError::parse(source, "missing column `unit`"))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != unit_col)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut seen = HashSet::new();
    for n in &names {
        if n.is_empty() || !seen.insert(n.as_str()) {
            return Err(CliError::parse(source, format!("empty or duplicate covariate column `{n}`")));
        }
    }
    let mut rows = HashMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let line = line + 2;
        let rec = rec.map_err(|e| CliError::parse(source, e.to_string()))?;
        let unit = rec.get(unit_col).unwrap_or("").to_string();
        let mut values = Vec::with_capacity(names.len());
        for (i, v) in rec.iter().enumerate() {
            if i == unit_col {
                continue;
            }
            values.push(
                v.parse::<f64>()
                    .map_err(|_| CliError::parse(source, format!("line {line}: covariate value `{v}` is not a number")))?,
            );
        }
        if rows.insert(unit.clone(), values).is_some() {
            return Err(CliError::Panel(format!(
                "{}: line {line}: duplicate covariate row for unit `{unit}`",
                source.display()
            )));
        }
    }
    Ok(CovariateTable {
        source: source.to_path_buf(),
        names,
        rows,
    })
}

fn domain_matrix(rows: &OutcomeRows, order: &[usize], domain: Domain) -> CliResult<Matrix> {
    let periods = order
        .iter()
        .filter_map(|u| rows.cells.get(&(domain, *u)))
        .flat_map(|m| m.keys().copied())
        .max()
        .ok_or_else(|| CliError::Panel(format!("{}: no {} rows", rows.source.display(), domain_name(domain))))?
        as usize;
    let mut m = Matrix::zeros(order.len(), periods);
    for (r, &u) in order.iter().enumerate() {
        let unit = &rows.units[u];
        let cells = rows.cells.get(&(domain, u)).ok_or_else(|| {
            CliError::Panel(format!("unit `{unit}` has no {} rows", domain_name(domain)))
        })?;
        for t in 1..=periods {
            let v = cells.get(&(t as u32)).ok_or_else(|| {
                CliError::Panel(format!("unit `{unit}` is missing {} period {t}", domain_name(domain)))
            })?;
            m.set(r, t - 1, *v);
        }
    }
    Ok(m)
}

fn covariate_matrix(table: Option<&CovariateTable>, ids: &[String], opts: ReadOptions) -> CliResult<(Matrix, Vec<String>)> {
    let Some(table) = table else {
        return Ok((Matrix::empty_cols(ids.len()), Vec::new()));
    };
    let mut m = Matrix::zeros(ids.len(), table.names.len());
    for (r, id) in ids.iter().enumerate() {
        let row = table.rows.get(id).ok_or_else(|| {
            CliError::Panel(format!("{}: no covariate row for unit `{id}`", table.source.display()))
        })?;
        for (c, v) in row.iter().enumerate() {
            m.set(r, c, *v);
        }
    }
    if !opts.permissive {
        let known: HashSet<&String> = ids.iter().collect();
        let mut extra: Vec<&String> = table.rows.keys().filter(|u| !known.contains(u)).collect();
        extra.sort();
        if let Some(u) = extra.first() {
            return Err(CliError::Panel(format!(
                "{}: covariate row for unit `{u}` which has no outcomes (use --permissive to ignore)",
                table.source.display()
            )));
        }
    }
    Ok((m, table.names.clone()))
}

/// Assembles the panel with `target` in row 0 and donors in order of first
/// appearance in the outcomes file.
pub fn build_panel(
    outcomes: &OutcomeRows,
    cov_target: Option<&CovariateTable>,
    cov_reference: Option<&CovariateTable>,
    target: &str,
    opts: ReadOptions,
) -> CliResult<PanelDataset> {
    let t = outcomes
        .units
        .iter()
        .position(|u| u == target)
        .ok_or_else(|| CliError::Panel(format!("target unit `{target}` does not appear in the outcomes file")))?;
    let order: Vec<usize> = std::iter::once(t).chain((0..outcomes.units.len()).filter(|&u| u != t)).collect();
    let ids: Vec<String> = order.iter().map(|&u| outcomes.units[u].clone()).collect();
    let y = domain_matrix(outcomes, &order, Domain::Target)?;
    let f = domain_matrix(outcomes, &order, Domain::Reference)?;
    let (x, x_names) = covariate_matrix(cov_target, &ids, opts)?;
    let (z, z_names) = covariate_matrix(cov_reference, &ids, opts)?;
    let mut ds = PanelDataset::new(ids, y, f, x, z);
    ds.x_names = x_names;
    ds.z_names = z_names;
    let report = panelfusion_core::panel::validate(&ds);
    if !report.passed() {
        return Err(CliError::Panel(report.failures().collect::<Vec<_>>().join("; ")));
    }
    Ok(ds)
}

/// Reads the three files of a run and builds the panel.
pub fn load_panel(
    outcomes: &Path,
    cov_target: Option<&Path>,
    cov_reference: Option<&Path>,
    target: &str,
    opts: ReadOptions,
) -> CliResult<PanelDataset> {
    let rows = read_outcomes(outcomes, opts)?;
    let x = cov_target.map(read_covariates).transpose()?;
    let z = cov_reference.map(read_covariates).transpose()?;
    build_panel(&rows, x.as_ref(), z.as_ref(), target, opts)
}

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_outcomes<W: Write>(ds: &PanelDataset, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(OUTCOME_COLUMNS)?;
    for (domain, m) in [("target", &ds.y), ("reference", &ds.f)] {
        for (i, id) in ds.unit_ids.iter().enumerate() {
            for (t, v) in m.row(i).iter().enumerate() {
                wtr.write_record([domain, id, &(t + 1).to_string(), &fmt_f64(*v)])?;
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_covariates<W: Write>(ids: &[String], names: &[String], m: &Matrix, w: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(std::iter::once("unit").chain(names.iter().map(String::as_str)))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(m.row(i).iter().map(|v| fmt_f64(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Paths written by [`export_panel`].
pub struct ExportedPanel {
    pub outcomes: PathBuf,
    pub covariates_target: Option<PathBuf>,
    pub covariates_reference: Option<PathBuf>,
}

/// Writes `outcomes.csv` and, when covariates exist, `covariates_target.csv`
/// and `covariates_reference.csv` into `dir`.
pub fn export_panel(ds: &PanelDataset, dir: &Path) -> CliResult<ExportedPanel> {
    let create = |name: &str| -> CliResult<(PathBuf, File)> {
        let p = dir.join(name);
        let f = File::create(&p).map_err(|e| CliError::io(&p, e))?;
        Ok((p, f))
    };
    let wrap = |p: &Path, e: csv::Error| CliError::io(p, std::io::Error::other(e.to_string()));
    let (outcomes, f) = create("outcomes.csv")?;
    write_outcomes(ds, f).map_err(|e| wrap(&outcomes, e))?;
    let cov = |name: &str, names: &[String], m: &Matrix| -> CliResult<Option<PathBuf>> {
        if m.cols() == 0 {
            return Ok(None);
        }
        let (p, f) = create(name)?;
        write_covariates(&ds.unit_ids, names, m, f).map_err(|e| wrap(&p, e))?;
        Ok(Some(p))
    };
    let covariates_target = cov("covariates_target.csv", &ds.x_names, &ds.x)?;
    let covariates_reference = cov("covariates_reference.csv", &ds.z_names, &ds.z)?;
    Ok(ExportedPanel {
        outcomes,
        covariates_target,
        covariates_reference,
    })
}
