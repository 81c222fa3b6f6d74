//! End-to-end solves on small grids: config text in, invariants and files out.

use std::sync::Arc;

use nls_core::io::{emit_report, parse_config, read_field, read_summary, RunOutputs, SummaryRow};
use nls_core::symmetry::symmetry_residual;
use nls_core::{
    count_nodal_domains, multi_start, solve_constrained_ground_state, GridSpec, NonlinearityModel, Problem,
    SolverConfig, SymmetryConstraint,
};

fn spec3() -> Arc<GridSpec> {
    Arc::new(GridSpec::new(3, 2, &[5.0, 5.0, 7.0], &[21, 21, 29]).unwrap())
}

fn config(constraint: SymmetryConstraint) -> SolverConfig {
    SolverConfig {
        grad_tol: 1e-6,
        constraint,
        ..SolverConfig::default()
    }
}

#[test]
fn nodal_counts_follow_the_symmetry_class() {
    let problem = Problem::new(&spec3(), NonlinearityModel::pure_power(4.0).unwrap());
    let (_, ground) = solve_constrained_ground_state(&problem, &config(SymmetryConstraint::FullSpace)).unwrap();
    assert!(ground.converged);
    for (constraint, want) in [
        (SymmetryConstraint::KOdd(1), 2),
        (SymmetryConstraint::KOdd(2), 4),
        (SymmetryConstraint::CyclicOdd(1), 2),
        (SymmetryConstraint::CyclicOdd(2), 4),
    ] {
        let (u, rep) = solve_constrained_ground_state(&problem, &config(constraint.clone())).unwrap();
        assert!(rep.converged, "{constraint:?}");
        assert_eq!(
            count_nodal_domains(&u, 1e-6 * u.max_abs()).unwrap().total,
            want,
            "{constraint:?}"
        );
        assert!(symmetry_residual(&u, &constraint).unwrap() <= 1e-12);
        assert!(rep.final_energy >= ground.final_energy - 1e-6);
        for w in rep.trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-12 * w[0].energy.abs());
        }
        assert!(rep.grad_residual <= 10.0 * 1e-6);
    }
}

#[test]
fn mixed_power_model_converges_to_positive_state() {
    let model = NonlinearityModel::new(vec![
        nls_core::PowerTerm {
            coefficient: 1.0,
            exponent: 3.0,
        },
        nls_core::PowerTerm {
            coefficient: 0.5,
            exponent: 5.0,
        },
    ])
    .unwrap();
    let spec = Arc::new(GridSpec::new(2, 1, &[5.0, 8.0], &[31, 47]).unwrap());
    let problem = Problem::new(&spec, model);
    let (_, rep) = solve_constrained_ground_state(&problem, &config(SymmetryConstraint::FullSpace)).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.nodal_count, 1);
    assert!(rep.min_interior_value > 0.0);
    for t in &rep.trace {
        assert!(t.nehari_residual.abs() <= 1e-10 * t.h_norm_sq);
    }
}

#[test]
fn multi_start_agrees_across_seeds() {
    let spec = Arc::new(GridSpec::new(2, 1, &[5.0, 8.0], &[31, 47]).unwrap());
    let problem = Problem::new(&spec, NonlinearityModel::pure_power(4.0).unwrap());
    let mut c = config(SymmetryConstraint::KOdd(1));
    c.init_noise = 0.3;
    let ms = multi_start(&problem, &c, 4).unwrap();
    assert!(ms.relative_spread() <= 1e-6, "{}", ms.relative_spread());
}

#[test]
fn config_to_report_round_trip() {
    let text = "\
grid.N = 2
grid.m = 1
grid.L = 4, 6
grid.n = 25, 37
model.term = 1.0 4.0
solver.grad_tol = 1e-7
";
    let cfg = parse_config(text).unwrap();
    let problem = Problem::new(&cfg.spec, cfg.model.clone());
    let (u, rep) = solve_constrained_ground_state(&problem, &cfg.solver).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let row = SummaryRow::from_summary(&rep.summary, Some(rep.iterations));
    let written = emit_report(
        dir.path(),
        &RunOutputs {
            field: Some(&u),
            summary: vec![row.clone()],
            trace: Some(&rep.trace),
            slices: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(written.iter().any(|p| p.ends_with("slices/x1y1.csv")));
    assert_eq!(read_summary(&dir.path().join("summary.csv")).unwrap(), vec![row]);
    let back = read_field(dir.path().join("field.nlsf")).unwrap();
    assert_eq!(back.values(), u.values());
    assert_eq!(**back.spec(), *cfg.spec);
}
