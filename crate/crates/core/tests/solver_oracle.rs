mod common;

use common::oracle::{grid_qcqp, refined_qcqp, random_instance, Block, Lcg};
use panelfusion_core::solver::{nse, solve_budgeted_qcqp, solve_simplex_ls, NseConstraint, ObjectiveBlock, QcqpProblem, SolverConfig};

const DIVISIONS: usize = 100;

#[test]
fn simplex_ls_matches_grid() {
    let mut rng = Lcg(17);
    let cfg = SolverConfig::default();
    for _ in 0..60 {
        let inst = random_instance(&mut rng, DIVISIONS);
        let sol = solve_simplex_ls(&inst.obj_target, &inst.obj_donors, &cfg).unwrap();
        let (grid, _) = grid_qcqp(
            &[(1.0, Block { target: &inst.obj_target, donors: &inst.obj_donors })],
            &[],
            inst.j,
            DIVISIONS,
        )
        .unwrap();
        assert!(sol.objective <= grid + 1e-9, "{} > grid {}", sol.objective, grid);
        assert!(grid - sol.objective < 1e-3, "grid {} vs {}", grid, sol.objective);
    }
}

#[test]
fn qcqp_matches_grid() {
    let mut rng = Lcg(99);
    let cfg = SolverConfig::default();
    for _ in 0..60 {
        let inst = random_instance(&mut rng, DIVISIONS);
        let problem = QcqpProblem {
            objective: vec![ObjectiveBlock { weight: 1.0, target: inst.obj_target.clone(), donors: inst.obj_donors.clone() }],
            constraints: vec![NseConstraint { target: inst.con_target.clone(), donors: inst.con_donors.clone(), rhs: inst.rhs }],
            donors: inst.j,
        };
        let sol = solve_budgeted_qcqp(&problem, &cfg).unwrap();
        let slack = inst.rhs - nse(&inst.con_target, &inst.con_donors, &sol.weights).unwrap();
        assert!(slack >= -cfg.constraint_tol, "violated by {}", -slack);
        let (grid, _) = refined_qcqp(
            &[(1.0, Block { target: &inst.obj_target, donors: &inst.obj_donors })],
            &[(Block { target: &inst.con_target, donors: &inst.con_donors }, inst.rhs)],
            inst.j,
            DIVISIONS,
            3,
        )
        .expect("rhs above the grid minimum");
        let obj = sol.diagnostics.objective;
        assert!(obj <= grid + 1e-7, "{obj} > grid {grid}");
        assert!(grid - obj < 1e-3, "grid {grid} vs {obj}");
    }
}
