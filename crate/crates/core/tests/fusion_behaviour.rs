use panelfusion_core::fusion::{run_fusion, run_naive, run_sensitivity, BudgetVector, FusionConfig};
use panelfusion_core::sim::{generate_dgp, latent_match, DgpConfig};
use panelfusion_core::solver::{solve_budgeted_qcqp, ObjectiveBlock, QcqpProblem, SolverConfig};
use panelfusion_core::stats::median;
use panelfusion_core::{Error, Matrix, PanelDataset};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("u{i}")).collect()
}

fn rows(r: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&r.iter().map(|v| v.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Target copies donor 1 in F and donor 2 in X.
fn conflicting_f_and_x() -> PanelDataset {
    let t = 40;
    let series = |a: f64, b: f64| (0..t).map(|k| a + b * (k as f64 * 0.3).sin()).collect::<Vec<_>>();
    let f = Matrix::from_rows(&[series(1.0, 2.0), series(1.0, 2.0), series(5.0, -1.0), series(3.0, 0.5)]).unwrap();
    PanelDataset::new(
        ids(4),
        rows(&[&[1.0], &[1.0], &[2.0], &[3.0]]),
        f,
        rows(&[&[0.0], &[1.0], &[0.0], &[0.5]]),
        rows(&[&[0.2], &[0.2], &[0.2], &[0.2]]),
    )
}

#[test]
fn naive_stacking_sacrifices_target_covariates() {
    let ds = conflicting_f_and_x();
    let cfg = FusionConfig::default();
    let naive = run_naive(&ds, &cfg).unwrap();
    let fused = run_fusion(&ds, &cfg).unwrap();
    assert!(naive.nse_x.unwrap() > fused.nse_x.unwrap(), "{:?} vs {:?}", naive.nse_x, fused.nse_x);
}

#[test]
fn naive_and_fusion_agree_without_trade_off() {
    // every block is matched exactly by w = (0.25, 0.75, 0)
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.25 * x + 0.75 * y).collect::<Vec<_>>();
    let f1 = [1.0, 4.0, 2.0, 6.0];
    let f2 = [3.0, 0.0, 5.0, 1.0];
    let f3 = [9.0, 9.0, 0.0, 2.0];
    let z1 = [0.1, 0.9];
    let z2 = [0.7, 0.3];
    let z3 = [1.0, 0.0];
    let x1 = [0.0, 0.4];
    let x2 = [1.0, 0.8];
    let x3 = [0.3, 0.0];
    let ds = PanelDataset::new(
        ids(4),
        rows(&[&[2.0], &[1.0], &[2.0], &[3.0]]),
        rows(&[&mix(&f1, &f2), &f1, &f2, &f3]),
        rows(&[&mix(&x1, &x2), &x1, &x2, &x3]),
        rows(&[&mix(&z1, &z2), &z1, &z2, &z3]),
    );
    let cfg = FusionConfig {
        normalize_covariates: false,
        ..FusionConfig::default()
    };
    let naive = run_naive(&ds, &cfg).unwrap();
    let fused = run_fusion(&ds, &cfg).unwrap();
    for (a, b) in naive.weights.iter().zip(fused.weights.iter()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    assert!((fused.weights[0] - 0.25).abs() < 1e-6);
}

/// Target copies donor 1 in Z and donor 2 in X, so tight tolerances on both
/// cannot hold at once.
pub fn conflicting_baselines() -> PanelDataset {
    PanelDataset::new(
        ids(4),
        rows(&[&[1.0], &[1.0], &[1.0], &[1.0]]),
        rows(&[&[1.0, 2.0], &[1.5, 2.5], &[0.0, 1.0], &[2.0, 2.0]]),
        rows(&[&[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]),
        rows(&[&[0.2, 0.8], &[0.2, 0.8], &[0.9, 0.1], &[0.6, 0.6]]),
    )
}

#[test]
fn conflicting_baselines_are_reported_infeasible() {
    let cfg = FusionConfig {
        eta_z: 1e-6,
        eta_x: 1e-6,
        ..FusionConfig::default()
    };
    let err = run_fusion(&conflicting_baselines(), &cfg).unwrap_err();
    assert!(matches!(err, Error::Infeasible(_)), "{err}");
    assert!(err.to_string().contains("eta"));
    // both constraints can hold together once eta >= 0.25
    let loose = FusionConfig {
        eta_z: 0.5,
        eta_x: 0.5,
        ..FusionConfig::default()
    };
    assert!(run_fusion(&conflicting_baselines(), &loose).is_ok());
}

#[test]
fn sensitivity_flags_infeasible_rows_and_continues() {
    let rows = run_sensitivity(&conflicting_baselines(), &FusionConfig::default(), &[(1e-6, 1e-6), (0.5, 0.5)]).unwrap();
    assert!(!rows[0].feasible && rows[0].error.is_some());
    assert!(rows[1].feasible);
    let loose = FusionConfig {
        eta_z: 0.5,
        eta_x: 0.5,
        ..FusionConfig::default()
    };
    let single = run_fusion(&conflicting_baselines(), &loose).unwrap();
    assert_eq!(rows[1].psi_hat, Some(single.psi_hat));
    assert_eq!(rows[1].budget, single.budget);
}

fn replication_panel(t: usize, replicate: u64) -> panelfusion_core::sim::SimulatedPanel {
    generate_dgp(&DgpConfig {
        reference_periods: t,
        replicate,
        ..DgpConfig::default()
    })
    .unwrap()
}

#[test]
fn large_eta_equals_unconstrained_optimum() {
    let p = replication_panel(20, 1);
    let cfg = FusionConfig {
        eta_z: 1e9,
        eta_x: 1e9,
        budget_grid_step: 0.25,
        normalize_covariates: false,
        ..FusionConfig::default()
    };
    let r = run_fusion(&p.dataset, &cfg).unwrap();
    let ds = &p.dataset;
    let donors = |m: &Matrix| m.select_rows(&(1..m.rows()).collect::<Vec<_>>());
    let mut best = f64::INFINITY;
    for b in BudgetVector::grid(0.25).unwrap() {
        let problem = QcqpProblem {
            objective: vec![
                ObjectiveBlock { weight: b.b_f, target: ds.f.row(0).to_vec(), donors: donors(&ds.f) },
                ObjectiveBlock { weight: b.b_z, target: ds.z.row(0).to_vec(), donors: donors(&ds.z) },
                ObjectiveBlock { weight: b.b_x, target: ds.x.row(0).to_vec(), donors: donors(&ds.x) },
            ],
            constraints: vec![],
            donors: ds.donors(),
        };
        let w = solve_budgeted_qcqp(&problem, &SolverConfig::default()).unwrap().weights;
        best = best.min(panelfusion_core::solver::nse(ds.f.row(0), &donors(&ds.f), &w).unwrap());
    }
    assert!((r.nse_f - best).abs() < 1e-6, "{} vs {}", r.nse_f, best);
}

#[test]
fn shrinking_eta_z_never_improves_nse_f() {
    let p = replication_panel(20, 2);
    let mut last = 0.0;
    for eta_z in [1.0, 0.2, 0.1, 0.05, 0.01] {
        let cfg = FusionConfig {
            eta_z,
            budget_grid_step: 0.1,
            ..FusionConfig::default()
        };
        let r = run_fusion(&p.dataset, &cfg).unwrap();
        assert!(r.nse_f >= last - 1e-7, "eta_z {eta_z}: {} < {}", r.nse_f, last);
        last = r.nse_f;
    }
}

#[test]
fn sensitivity_spread_is_small_on_replication_dgp() {
    let p = replication_panel(20, 1);
    let grid: Vec<(f64, f64)> = [0.05, 0.1, 0.2]
        .iter()
        .flat_map(|&a| [0.05, 0.1, 0.2].map(move |b| (a, b)))
        .collect();
    let rows = run_sensitivity(&p.dataset, &FusionConfig::default(), &grid).unwrap();
    let psi: Vec<f64> = rows.iter().map(|r| r.psi_hat.unwrap()).collect();
    let spread = psi.iter().cloned().fold(f64::MIN, f64::max) - psi.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.1 * p.psi0, "spread {spread} vs psi0 {}", p.psi0);
}

#[test]
fn fitted_weights_match_latent_factors_better_than_uniform() {
    let (mut fitted, mut uniform) = (Vec::new(), Vec::new());
    for m in 1..=50 {
        let p = replication_panel(100, m);
        let r = run_fusion(&p.dataset, &FusionConfig::default()).unwrap();
        let (a, b) = latent_match(&p, &r.weights).unwrap();
        fitted.push(a);
        uniform.push(b);
    }
    assert!(median(&fitted) < median(&uniform), "{} vs {}", median(&fitted), median(&uniform));
}
