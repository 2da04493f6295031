use std::fs;
use std::path::{Path, PathBuf};

use panelfusion_cli::error::*;
use panelfusion_core::fusion::{run_fusion, FusionConfig};
use panelfusion_core::sim::{generate_dgp, DgpConfig};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = panelfusion_cli::run(
        std::iter::once("panelfusion").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Exports a small simulated panel and returns its directory.
fn panel(dir: &Path, donors: usize) -> PathBuf {
    let d = dir.join("panel");
    let donors = donors.to_string();
    let (code, _, err) = run(&[
        "simulate",
        "--experiment",
        "panel",
        "--donors",
        &donors,
        "--periods",
        "15",
        "--seed",
        "2",
        "--out",
        s(&d),
    ]);
    assert_eq!(code, 0, "{err}");
    d
}

fn data_args(p: &Path) -> Vec<String> {
    vec![
        "--outcomes".into(),
        p.join("outcomes.csv").to_str().unwrap().into(),
        "--covariates-target".into(),
        p.join("covariates_target.csv").to_str().unwrap().into(),
        "--covariates-reference".into(),
        p.join("covariates_reference.csv").to_str().unwrap().into(),
        "--target-unit".into(),
        "target".into(),
    ]
}

fn run_with(cmd: &str, p: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut a: Vec<String> = vec![cmd.into()];
    a.extend(data_args(p));
    a.extend(extra.iter().map(|x| x.to_string()));
    let refs: Vec<&str> = a.iter().map(String::as_str).collect();
    run(&refs)
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn estimate_is_byte_identical_across_runs() {
    let t = tempfile::tempdir().unwrap();
    let p = panel(t.path(), 8);
    let a = t.path().join("a");
    let b = t.path().join("b");
    assert_eq!(run_with("estimate", &p, &["--out", s(&a)]).0, 0);
    assert_eq!(run_with("estimate", &p, &["--out", s(&b)]).0, 0);
    for f in ["report.json", "gaps.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn estimate_matches_the_library() {
    let t = tempfile::tempdir().unwrap();
    let p = panel(t.path(), 8);
    let o = t.path().join("o");
    assert_eq!(run_with("estimate", &p, &["--method", "synth", "--out", s(&o)]).0, 0);
    let rep = json(&o.join("report.json"));
    let sim = generate_dgp(&DgpConfig {
        donors: 8,
        reference_periods: 15,
        master_seed: 2,
        ..DgpConfig::default()
    })
    .unwrap();
    let direct = run_fusion(&sim.dataset, &FusionConfig::default()).unwrap();
    let est = &rep["estimates"][0];
    assert_eq!(est["method"], "synth");
    assert_eq!(est["psi_hat"].as_f64().unwrap(), direct.psi_hat);
    let w: Vec<f64> = est["synth"]["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|u| u["weight"].as_f64().unwrap())
        .collect();
    assert_eq!(w, direct.weights.as_slice());
    assert_eq!(est["synth"]["per_budget"].as_array().unwrap().len(), 231);
    let balance = est["synth"]["covariate_balance"].as_array().unwrap();
    assert_eq!(balance.len(), 6);
}

#[test]
fn config_file_and_flags_are_merged() {
    let t = tempfile::tempdir().unwrap();
    let p = panel(t.path(), 6);
    let cfg = t.path().join("run.toml");
    fs::write(
        &cfg,
        "method = \"linear-eq,synth\"\n[fusion]\neta_z = 0.3\neta_x = 0.25\nbudget_grid_step = 0.25\n",
    )
    .unwrap();
    let o = t.path().join("o");
    let (code, _, err) = run_with("estimate", &p, &["--config", s(&cfg), "--eta-x", "0.4", "--out", s(&o)]);
    assert_eq!(code, 0, "{err}");
    let m = &json(&o.join("report.json"))["manifest"];
    assert_eq!(m["fusion"]["eta_z"], 0.3);
    assert_eq!(m["fusion"]["eta_x"], 0.4);
    assert_eq!(m["fusion"]["budget_grid_step"], 0.25);
    assert_eq!(m["methods"], serde_json::json!(["linear-eq", "synth"]));
}

#[test]
fn exit_codes_by_failure_class() {
    let t = tempfile::tempdir().unwrap();
    let p = panel(t.path(), 6);

    assert_eq!(run(&["estimate", "--bogus"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
    assert_eq!(run_with("estimate", &p, &["--method", "ols"]).0, EXIT_USAGE);
    assert_eq!(run_with("estimate", &p, &["--budget-step", "0.3"]).0, EXIT_USAGE);

    let missing = t.path().join("nope.csv");
    assert_eq!(
        run(&["estimate", "--outcomes", s(&missing), "--target-unit", "x"]).0,
        EXIT_IO
    );

    let bad = t.path().join("bad.csv");
    fs::write(&bad, "domain,unit,period,outcome\n").unwrap();
    assert_eq!(run(&["estimate", "--outcomes", s(&bad), "--target-unit", "x"]).0, EXIT_PARSE);

    assert_eq!(
        run(&[
            "estimate",
            "--outcomes",
            s(&p.join("outcomes.csv")),
            "--target-unit",
            "nobody"
        ])
        .0,
        EXIT_PANEL
    );

    let o = t.path().join("inf");
    let (code, _, err) = run_with(
        "estimate",
        &p,
        &["--method", "synth", "--eta-z", "0", "--eta-x", "0", "--out", s(&o)],
    );
    assert_eq!(code, EXIT_INFEASIBLE, "{err}");
    assert!(err.contains("increase eta_z / eta_x"));
    let e = json(&o.join("error.json"));
    assert_eq!(e["error"]["kind"], "infeasible");
    assert_eq!(e["error"]["exit_code"], EXIT_INFEASIBLE);

    let neg = t.path().join("neg.csv");
    fs::write(
        &neg,
        "domain,unit,time,outcome\ntarget,a,1,1\ntarget,b,1,1\nreference,a,1,1\nreference,b,1,-1\n",
    )
    .unwrap();
    assert_eq!(
        run(&["estimate", "--outcomes", s(&neg), "--target-unit", "a", "--method", "log-eq"]).0,
        EXIT_INPUT
    );
    assert_eq!(
        run(&["placebo", "--outcomes", s(&neg), "--target-unit", "a"]).0,
        EXIT_INPUT
    );
}

#[test]
fn binary_reports_exit_code() {
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_panelfusion"))
        .args(["bounds", "log", "lower_y=1"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(EXIT_USAGE));
    let ok = std::process::Command::new(env!("CARGO_BIN_EXE_panelfusion"))
        .args([
            "bounds",
            "log",
            "lower_y=1",
            "upper_y=2",
            "lower_f=1",
            "upper_f=2",
            "tau=0",
            "ratio_cov=0",
            "donors=4",
        ])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let v: f64 = String::from_utf8(ok.stdout).unwrap().trim().parse().unwrap();
    // D = 1, l_F = 1, J = 4: 2 * (1/4/2 + 2 * (1/16)).
    assert!((v - 0.5).abs() < 1e-12, "{v}");
}

#[test]
fn placebo_and_sensitivity_write_outputs() {
    let t = tempfile::tempdir().unwrap();
    let p = panel(t.path(), 5);
    let o = t.path().join("pl");
    let (code, _, err) = run_with("placebo", &p, &["--budget-step", "0.25", "--out", s(&o)]);
    assert_eq!(code, 0, "{err}");
    let pj = json(&o.join("placebo.json"));
    assert_eq!(pj["units"], 6);
    let runs = fs::read_to_string(o.join("placebo_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 7);

    let o = t.path().join("sen");
    let (code, _, err) = run_with(
        "sensitivity",
        &p,
        &["--budget-step", "0.25", "--eta-grid", "0.1,0.5", "--out", s(&o)],
    );
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(o.join("sensitivity.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn simulate_bias_is_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let args = |d: &Path| {
        run(&[
            "simulate",
            "--replicates",
            "3",
            "--periods",
            "5,10",
            "--donors",
            "5",
            "--budget-step",
            "0.25",
            "--out",
            s(d),
        ])
    };
    let a = t.path().join("a");
    let b = t.path().join("b");
    assert_eq!(args(&a).0, 0);
    assert_eq!(args(&b).0, 0);
    for f in ["bias_rows.csv", "bias_summary.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let rows = fs::read_to_string(a.join("bias_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 3 * 2 * 3);
    assert_eq!(run(&["simulate", "--replicates", "3"]).0, EXIT_USAGE);
}
