//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nls_core::analysis::center_of_mass;
use nls_core::io::{read_field, read_summary, write_field};
use nls_core::oracle::{dense_scale_scan, fd_gradient_check, scan_ratio};
use nls_core::symmetry::{fold_sector, sector_axis_residual, sector_energy, unfold_sector};
use nls_core::{
    count_nodal_domains, dipole_study, dirichlet_energy, integrate, laplacian_apply, linear_ground_eigenpair,
    potential_values, radial_symmetry_residual, solve_constrained_ground_state, Field, GridSpec, NonlinearityModel,
    PowerTerm, Problem, RadialBlock, SolveReport, SolverConfig, SymmetryConstraint,
};

type Check = Result<String, String>;

fn ensure(cond: bool, detail: String) -> Check {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn p4() -> NonlinearityModel {
    NonlinearityModel::pure_power(4.0).unwrap()
}

fn solve(spec: &Arc<GridSpec>, constraint: SymmetryConstraint) -> Result<(Field, SolveReport), String> {
    let problem = Problem::new(spec, p4());
    let config = SolverConfig {
        grad_tol: 1e-6,
        max_iters: 3000,
        constraint,
        ..SolverConfig::default()
    };
    solve_constrained_ground_state(&problem, &config).map_err(|e| e.to_string())
}

/// Smooth random field: a few Gaussian bumps of random sign plus small noise.
fn random_field(spec: &Arc<GridSpec>, rng: &mut ChaCha8Rng) -> Field {
    let nd = spec.total_dims();
    let bumps: Vec<(f64, Vec<f64>, f64)> = (0..3)
        .map(|_| {
            let amp = rng.random_range(-2.0..2.0);
            let c = (0..nd)
                .map(|a| rng.random_range(-0.5..0.5) * spec.half_width(a))
                .collect();
            (amp, c, rng.random_range(0.5..1.5))
        })
        .collect();
    let smooth = Field::from_fn(spec, |z| {
        bumps
            .iter()
            .map(|(a, c, w)| {
                let r2: f64 = z.iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum();
                a * (-r2 / (w * w)).exp()
            })
            .sum()
    });
    let noise: Vec<f64> = (0..spec.len()).map(|_| 1e-3 * rng.random_range(-1.0..1.0)).collect();
    Field::from_values(spec, smooth.values().iter().zip(&noise).map(|(s, n)| s + n).collect()).unwrap()
}

fn criterion_1() -> Check {
    let spec = Arc::new(GridSpec::new(2, 1, &[8.0, 8.0], &[255, 255]).unwrap());
    let (lambda, _) = linear_ground_eigenpair(&potential_values(&spec), 1e-8).map_err(|e| e.to_string())?;
    let want = 1.0 + (std::f64::consts::PI / 16.0).powi(2);
    let full = Arc::new(GridSpec::fully_confined(&[8.0, 8.0], &[255, 255]).unwrap());
    let (lambda_full, _) = linear_ground_eigenpair(&potential_values(&full), 1e-8).map_err(|e| e.to_string())?;
    ensure(
        (lambda - want).abs() <= 1e-2 && (lambda_full - 2.0).abs() <= 1e-2,
        format!("λ = {lambda:.6} (expect {want:.6}), fully confined λ = {lambda_full:.6} (expect 2)"),
    )
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = Arc::new(GridSpec::new(3, 2, &[2.0, 3.0, 4.0], &[9, 11, 13]).unwrap());
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let u = Field::from_values(&spec, (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let by_parts = -integrate(&u.zip_map(&laplacian_apply(&u), |a, b| a * b));
        worst = worst.max(rel(by_parts, dirichlet_energy(&u)));
    }
    let spec = Arc::new(GridSpec::new(2, 1, &[3.0], &[31, 31]).unwrap());
    let v = potential_values(&spec);
    let problem = Problem::new(&spec, p4());
    let u = random_field(&spec, &mut rng);
    let grad = problem.functional().first_variation(&u).map_err(|e| e.to_string())?;
    let fd = fd_gradient_check(&u, &v, p4().terms(), &grad, 8, &[1e-2, 1e-3, 1e-4], 5);
    let bound = 1e-6 * (1.0 + fd.energy.abs());
    ensure(
        worst <= 1e-12 && fd.observed_order >= 1.9 && fd.defects[2] <= bound,
        format!(
            "summation by parts rel {worst:.1e}; fd order {:.3}, defect {:.1e} ≤ {bound:.1e}",
            fd.observed_order, fd.defects[2]
        ),
    )
}

fn criterion_3(traces: &[&SolveReport]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let spec = Arc::new(GridSpec::new(2, 1, &[4.0], &[25, 25]).unwrap());
    let v = potential_values(&spec);
    let functional = Problem::new(&spec, p4()).functional();
    let step = scan_ratio().ln();
    let (mut root_vs_closed, mut scan_vs_closed, mut peak_vs_root, mut fib_vs_root) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut single_crossing = true;
    for _ in 0..50 {
        let u = random_field(&spec, &mut rng);
        let closed = functional.nehari_scale(&u).map_err(|e| e.to_string())?;
        let bracketed = functional.nehari_scale_bracketed(&u).map_err(|e| e.to_string())?;
        let (t_fib, _) = functional.fibering_max(&u).map_err(|e| e.to_string())?;
        let scan = dense_scale_scan(&u, &v, p4().terms()).map_err(|e| e.to_string())?;
        root_vs_closed = root_vs_closed.max(rel(bracketed, closed));
        scan_vs_closed = scan_vs_closed.max((scan.t_root / closed).ln().abs() / step);
        peak_vs_root = peak_vs_root.max((scan.t_peak / scan.t_root).ln().abs() / step);
        fib_vs_root = fib_vs_root.max(rel(t_fib, closed));
        single_crossing &= scan.sign_changes == 1;
    }
    let mut identity: f64 = 0.0;
    let mut iterates = 0;
    for report in traces {
        for t in &report.trace {
            identity = identity.max(rel(t.energy, 0.25 * t.h_norm_sq));
            iterates += 1;
        }
    }
    ensure(
        root_vs_closed <= 1e-8
            && scan_vs_closed <= 1.0
            && peak_vs_root <= 1.0
            && fib_vs_root <= 1e-6
            && single_crossing
            && identity <= 1e-10,
        format!(
            "root finder rel {root_vs_closed:.1e}; scan {scan_vs_closed:.2} and peak {peak_vs_root:.2} steps off; \
             fibering max rel {fib_vs_root:.1e}; one crossing {single_crossing}; \
             I = ¼‖u‖² rel {identity:.1e} over {iterates} iterates"
        ),
    )
}

fn criterion_4(u: &Field, report: &SolveReport) -> Check {
    let peak = u.max_abs();
    let com = center_of_mass(u).map_err(|e| e.to_string())?;
    let radial_y = radial_symmetry_residual(u, &RadialBlock::Free, &com).map_err(|e| e.to_string())?;
    let radial_x = radial_symmetry_residual(u, &RadialBlock::Confined, &[0.0]).map_err(|e| e.to_string())?;
    let mono = radial_x.monotonicity_defect.max(radial_y.monotonicity_defect);
    ensure(
        report.converged
            && report.min_interior_value > 0.0
            && report.nodal_count == 1
            && report.symmetry_residual <= 1e-3
            && radial_y.residual <= 1e-2
            && mono <= 1e-2 * peak
            && report.decay_metric <= 1e-4,
        format!(
            "converged {} in {} its; min {:.2e}; nodal {}; x-reflection {:.1e}; y-radial {:.1e}; \
             monotonicity {:.1e}; decay {:.1e}",
            report.converged,
            report.iterations,
            report.min_interior_value,
            report.nodal_count,
            report.symmetry_residual,
            radial_y.residual,
            mono,
            report.decay_metric
        ),
    )
}

/// Largest `|u|` on the hyperplanes `x_i = 0`, `i < k` (odd `n` puts them on nodes).
fn hyperplane_max(u: &Field, k: usize) -> f64 {
    let spec = u.spec();
    let mut idx = vec![0usize; spec.total_dims()];
    let mut worst: f64 = 0.0;
    for j in 0..u.len() {
        spec.multi_index(j, &mut idx);
        if (0..k).any(|a| spec.coordinate(a, idx[a]) == 0.0) {
            worst = worst.max(u.values()[j].abs());
        }
    }
    worst
}

fn criterion_5(c: f64, runs: &[(usize, &Field, &SolveReport)]) -> Check {
    let mut ok = true;
    let mut parts = vec![format!("c = {c:.6}")];
    for &(k, u, report) in runs {
        let nodal = count_nodal_domains(u, 1e-6 * u.max_abs())
            .map_err(|e| e.to_string())?
            .total;
        let zeros = hyperplane_max(u, k);
        ok &= report.converged && nodal == 1 << k && zeros <= 1e-12 && report.final_energy >= c - 1e-6;
        parts.push(format!(
            "k={k}: nodal {nodal}, plane max {zeros:.1e}, m = {:.6}, converged {}",
            report.final_energy, report.converged
        ));
    }
    ensure(ok, parts.join("; "))
}

fn criterion_6(u: &Field, report: &SolveReport, problem: &Problem) -> Check {
    let functional = problem.functional();
    let nodal = count_nodal_domains(u, 1e-6 * u.max_abs())
        .map_err(|e| e.to_string())?
        .total;
    let reflect = sector_axis_residual(u, 2).map_err(|e| e.to_string())?;
    let v = fold_sector(u, 2).map_err(|e| e.to_string())?;
    let w = unfold_sector(&v, 2).map_err(|e| e.to_string())?;
    let round_trip = w.zip_map(u, |a, b| a - b).max_abs();
    let full = functional.energy(&w).map_err(|e| e.to_string())?.total;
    let sector = sector_energy(&functional, &v, 2).map_err(|e| e.to_string())?;
    ensure(
        report.converged && nodal == 4 && reflect <= 1e-3 && round_trip <= 1e-14 && rel(full, sector) <= 1e-10,
        format!(
            "converged {}; nodal {nodal}; axis reflections {reflect:.1e}; round trip {round_trip:.1e}; \
             I vs I_ℓ rel {:.1e}",
            report.converged,
            rel(full, sector)
        ),
    )
}

fn criterion_7() -> Check {
    let spec = Arc::new(GridSpec::new(2, 1, &[8.0, 24.0], &[127, 191]).unwrap());
    let (u, report) = solve(&spec, SymmetryConstraint::FullSpace)?;
    let problem = Problem::new(&spec, p4());
    let functional = problem.functional();
    let rows = dipole_study(&functional, &u, &[2.0, 4.0, 6.0, 8.0]).map_err(|e| e.to_string())?;
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let two_c = rows[0].two_c;
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0]);
    let last = *gaps.last().unwrap();

    // hard truncation to |y| ≤ 3, back onto the Nehari set
    let cut = Field::from_fn(&spec, |z| if z[1].abs() <= 3.0 { 1.0 } else { 0.0 });
    let truncated = u.zip_map(&cut, |a, m| a * m);
    let (w, _) = functional.project(&truncated).map_err(|e| e.to_string())?;
    let far = dipole_study(&functional, &w, &[4.0]).map_err(|e| e.to_string())?;
    let identity = (far[0].energy - far[0].two_c).abs() / far[0].two_c;
    ensure(
        report.converged && monotone && last <= 0.05 * two_c && identity <= 1e-12,
        format!(
            "gaps {:?}; final/2c {:.1e}; truncated identity rel {identity:.1e}",
            gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>(),
            last / two_c
        ),
    )
}

const SMALL_CONFIG: &str = "\
grid.N = 2
grid.m = 1
grid.L = 4, 6
grid.n = 31, 47
model.term = 1.0 4.0
constraint.kind = kodd
constraint.k = 1
solver.grad_tol = 1e-7
solver.seed = 7
";

fn run_nls(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_nls"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "nls {args:?} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn criterion_8(tmp: &Path) -> Check {
    let cfg = tmp.join("small.cfg");
    fs::write(&cfg, SMALL_CONFIG).map_err(|e| e.to_string())?;
    let cfg_s = cfg.to_str().unwrap();
    let (a, b, c) = (tmp.join("a"), tmp.join("b"), tmp.join("c"));
    run_nls(&["solve", "--config", cfg_s, "--out", a.to_str().unwrap()])?;
    run_nls(&["solve", "--config", cfg_s, "--out", b.to_str().unwrap()])?;
    let read = |p: &Path| fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    let fields_equal = read(&a.join("field.nlsf"))? == read(&b.join("field.nlsf"))?;
    let summaries_equal = read(&a.join("summary.csv"))? == read(&b.join("summary.csv"))?;

    let u = read_field(a.join("field.nlsf")).map_err(|e| e.to_string())?;
    let copy = tmp.join("copy.nlsf");
    write_field(&copy, &u).map_err(|e| e.to_string())?;
    let round_trip = read(&copy)? == read(&a.join("field.nlsf"))?
        && read_field(&copy)
            .map_err(|e| e.to_string())?
            .values()
            .iter()
            .zip(u.values())
            .all(|(x, y)| x.to_bits() == y.to_bits());

    let field = a.join("field.nlsf");
    run_nls(&[
        "analyze",
        "--field",
        field.to_str().unwrap(),
        "--config",
        cfg_s,
        "--out",
        c.to_str().unwrap(),
    ])?;
    let solved = &read_summary(&a.join("summary.csv")).map_err(|e| e.to_string())?[0];
    let analyzed = &read_summary(&c.join("summary.csv")).map_err(|e| e.to_string())?[0];
    let pairs = [
        (solved.energy, analyzed.energy),
        (solved.h_norm_sq, analyzed.h_norm_sq),
        (solved.nehari_residual, analyzed.nehari_residual),
        (solved.grad_residual, analyzed.grad_residual),
        (solved.nodal_total as f64, analyzed.nodal_total as f64),
        (solved.symmetry_residual, analyzed.symmetry_residual),
        (solved.decay_metric, analyzed.decay_metric),
    ];
    let recompute = pairs.iter().map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    ensure(
        fields_equal && summaries_equal && round_trip && recompute <= 1e-12,
        format!(
            "identical fields {fields_equal}, summaries {summaries_equal}; round trip {round_trip}; \
             analyze deviation {recompute:.1e}"
        ),
    )
}

fn criterion_9() -> Check {
    let p4 = p4().check_hypotheses(3).all_passed();
    let mixed = NonlinearityModel::new(vec![
        PowerTerm {
            coefficient: 1.0,
            exponent: 3.0,
        },
        PowerTerm {
            coefficient: 1.0,
            exponent: 5.0,
        },
    ])
    .unwrap()
    .check_hypotheses(3)
    .all_passed();
    let p7 = NonlinearityModel::pure_power(7.0).unwrap().check_hypotheses(3);
    let named = p7.first_failure().map(|c| c.name);
    ensure(
        p4 && mixed && !p7.all_passed() && named == Some("f2"),
        format!("p=4 passes {p4}; p=3+5 passes {mixed}; p=7 first failure {named:?}"),
    )
}

fn main() {
    nls_core::init_thread_pool().expect("NLS_THREADS");
    let mut results: Vec<(usize, &str, Check)> = Vec::new();

    results.push((1, "discretization", criterion_1()));
    results.push((2, "calculus identities", criterion_2()));

    let spec2 = Arc::new(GridSpec::new(2, 1, &[8.0, 12.0], &[127, 191]).unwrap());
    let ground = solve(&spec2, SymmetryConstraint::FullSpace);

    let spec3 = Arc::new(GridSpec::new(3, 2, &[6.0, 6.0, 10.0], &[41, 41, 61]).unwrap());
    let c3 = solve(&spec3, SymmetryConstraint::FullSpace);
    let k1 = solve(&spec3, SymmetryConstraint::KOdd(1));
    let k2 = solve(&spec3, SymmetryConstraint::KOdd(2));
    let cyc = solve(&spec3, SymmetryConstraint::CyclicOdd(2));

    let traces: Vec<&SolveReport> = [&ground, &k1, &k2]
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|(_, rep)| rep))
        .collect();
    results.push((
        3,
        "Nehari machinery",
        if traces.len() == 3 {
            criterion_3(&traces)
        } else {
            Err("a solve failed".into())
        },
    ));

    results.push((
        4,
        "positive ground state",
        ground
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|(u, r)| criterion_4(u, r)),
    ));

    results.push((
        5,
        "k-odd nodal counts",
        match (&c3, &k1, &k2) {
            (Ok((_, c)), Ok((u1, r1)), Ok((u2, r2))) => criterion_5(c.final_energy, &[(1, u1, r1), (2, u2, r2)]),
            _ => Err("a solve failed".into()),
        },
    ));

    results.push((
        6,
        "cyclic saddle, ℓ = 2",
        cyc.as_ref()
            .map_err(Clone::clone)
            .and_then(|(u, r)| criterion_6(u, r, &Problem::new(&spec3, p4()))),
    ));

    results.push((7, "two-bump mechanism", criterion_7()));

    let tmp = tempfile::tempdir().expect("tempdir");
    results.push((8, "determinism and I/O", criterion_8(tmp.path())));
    results.push((9, "hypothesis checker", criterion_9()));

    let mut failed = 0;
    for (n, name, check) in &results {
        match check {
            Ok(detail) => println!("PASS criterion {n} ({name}): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {n} ({name}): {detail}");
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
