//! Subcommands of the `nls` driver.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::Context;
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use nls_core::io::{
    emit_report, parse_config_with_overrides, read_field, ConfigErrors, RunConfig, RunOutputs, SummaryRow,
    SUMMARY_COLUMNS,
};
use nls_core::oracle::{self, dense_operator_matrix, dense_scale_scan, dense_smallest_eigenvalue, fd_gradient_check};
use nls_core::{
    dipole_study, laplacian_apply, linear_ground_eigenpair, multi_start, nodal_sensitivity, potential_values,
    solve_constrained_ground_state, summarize, Field, GridSpec, NonlinearityModel, Problem, SolveReport,
    SymmetryConstraint, SymmetryGroup,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nls", version, about = "Ground and nodal states of partially confined NLS")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the constrained minimization described by a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the summary of a stored field.
    Analyze {
        #[arg(long)]
        field: PathBuf,
        /// Relative nodal thresholds.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        thresholds: Vec<f64>,
        /// Model and constraint to evaluate against (default: p = 4, no symmetry).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ground state plus the two-bump construction at the given separations.
    Dipole {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        separations: Vec<f64>,
        /// Reuse a stored ground state instead of solving.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle and eigenpair validation suite.
    Validate,
    /// One solve per value of a config key, each in its own directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `key=v1,v2,...`
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<nls_core::Error> for Failure {
    fn from(e: nls_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<ConfigErrors> for Failure {
    fn from(e: ConfigErrors) -> Self {
        Failure::Usage(e.to_string())
    }
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = nls_core::init_thread_pool() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match run(cli.command) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_FAILURE,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

/// `Ok(false)` means the command ran but a check it performs failed.
pub fn run(command: Command) -> Result<bool, Failure> {
    match command {
        Command::Solve { config, out } => cmd_solve(&config, out),
        Command::Analyze {
            field,
            thresholds,
            config,
            out,
        } => cmd_analyze(&field, &thresholds, config.as_deref(), out),
        Command::Dipole {
            config,
            separations,
            field,
            out,
        } => cmd_dipole(&config, &separations, field.as_deref(), out),
        Command::Validate => Ok(cmd_validate()),
        Command::Sweep { config, vary, out } => cmd_sweep(&config, &vary, out),
    }
}

fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    parse_config_with_overrides(&text, overrides).map_err(|e| Failure::Usage(format!("{}:\n{e}", path.display())))
}

fn out_dir(cli: Option<PathBuf>, cfg: &RunConfig, fallback: &str) -> PathBuf {
    cli.or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from(fallback))
}

fn print_summary(row: &SummaryRow) {
    let iters = row.iterations.map(|i| i.to_string()).unwrap_or_else(|| "-".into());
    println!("energy            {}", row.energy);
    println!("h_norm_sq         {}", row.h_norm_sq);
    println!("nehari_residual   {:e}", row.nehari_residual);
    println!("grad_residual     {:e}", row.grad_residual);
    println!("iterations        {iters}");
    println!("nodal_total       {}", row.nodal_total);
    println!("symmetry_residual {:e}", row.symmetry_residual);
    println!("decay_metric      {:e}", row.decay_metric);
}

/// Solve (multi-start when `solver.starts > 1`) and write every output.
fn solve_into(cfg: &RunConfig, dir: &Path) -> Result<(Field, SolveReport, SummaryRow), Failure> {
    let problem = Problem::new(&cfg.spec, cfg.model.clone());
    let t0 = Instant::now();
    let (u, report) = if cfg.starts > 1 {
        let ms = multi_start(&problem, &cfg.solver, cfg.starts)?;
        let report = ms.best_report().clone();
        (ms.best, report)
    } else {
        solve_constrained_ground_state(&problem, &cfg.solver)?
    };
    let solve_secs = t0.elapsed().as_secs_f64();
    let row = SummaryRow::from_summary(&report.summary, Some(report.iterations));
    let t1 = Instant::now();
    let mut outputs = RunOutputs {
        field: cfg.output.field.then_some(&u),
        summary: vec![row.clone()],
        trace: Some(&report.trace),
        timing: Vec::new(),
        dipole: None,
        slices: cfg.output.slices,
    };
    // slices without the field file are still useful
    if !cfg.output.field && cfg.output.slices {
        nls_core::io::write_slices(dir, &u)?;
    }
    emit_report(dir, &outputs).with_context(|| format!("writing {}", dir.display()))?;
    outputs.timing = vec![
        ("solve".into(), solve_secs),
        ("write".into(), t1.elapsed().as_secs_f64()),
    ];
    nls_core::io::write_timing(&dir.join("timing.csv"), &outputs.timing)?;
    Ok((u, report, row))
}

fn cmd_solve(config: &Path, out: Option<PathBuf>) -> Result<bool, Failure> {
    let cfg = load_config(config, &[])?;
    let dir = out_dir(out, &cfg, "out");
    let (_, report, row) = solve_into(&cfg, &dir)?;
    print_summary(&row);
    if report.approximate {
        println!("note: some group elements act by interpolation; symmetry is approximate");
    }
    if !report.converged {
        eprintln!(
            "warning: not converged after {} iterations (residual {:e})",
            report.iterations,
            report.trace.last().map_or(f64::NAN, |t| t.residual)
        );
        return Ok(false);
    }
    println!("wrote {}", dir.display());
    Ok(true)
}

fn cmd_analyze(field: &Path, thresholds: &[f64], config: Option<&Path>, out: Option<PathBuf>) -> Result<bool, Failure> {
    let u = read_field(field).with_context(|| format!("reading {}", field.display()))?;
    let (model, constraint) = match config {
        Some(p) => {
            let cfg = load_config(p, &[])?;
            if *cfg.spec != **u.spec() {
                return Err(Failure::Usage(format!(
                    "{} describes a different grid than {}",
                    p.display(),
                    field.display()
                )));
            }
            (cfg.model, cfg.solver.constraint)
        }
        None => (NonlinearityModel::pure_power(4.0)?, SymmetryConstraint::FullSpace),
    };
    let spec = u.spec().clone();
    let functional = Problem::new(&spec, model).functional();
    let group = SymmetryGroup::new(&spec, &constraint)?;
    let summary = summarize(&functional, &group, &u)?;
    let row = SummaryRow::from_summary(&summary, None);
    print_summary(&row);
    if !thresholds.is_empty() {
        println!("threshold,positive,negative,total");
        for (rel, r) in thresholds.iter().zip(nodal_sensitivity(&u, thresholds)?) {
            println!("{rel:e},{},{},{}", r.positive_domains, r.negative_domains, r.total);
        }
    }
    if let Some(dir) = out {
        emit_report(
            &dir,
            &RunOutputs {
                summary: vec![row],
                ..Default::default()
            },
        )?;
    }
    Ok(true)
}

fn cmd_dipole(config: &Path, separations: &[f64], field: Option<&Path>, out: Option<PathBuf>) -> Result<bool, Failure> {
    let mut cfg = load_config(config, &[])?;
    if cfg.solver.constraint != SymmetryConstraint::FullSpace {
        return Err(Failure::Usage(
            "the two-bump study needs the ground state: use constraint.kind = full".into(),
        ));
    }
    let dir = out_dir(out, &cfg, "out");
    let problem = Problem::new(&cfg.spec, cfg.model.clone());
    let u = match field {
        Some(p) => {
            let u = read_field(p).with_context(|| format!("reading {}", p.display()))?;
            if **u.spec() != *cfg.spec {
                return Err(Failure::Usage(format!("{} lives on a different grid", p.display())));
            }
            u
        }
        None => {
            cfg.output.slices = false;
            let (u, report, _) = solve_into(&cfg, &dir)?;
            if !report.converged {
                eprintln!("warning: ground state not converged; the study uses the last iterate");
            }
            u
        }
    };
    let rows = dipole_study(&problem.functional(), &u, separations)?;
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    nls_core::io::write_dipole_csv(&dir.join("dipole.csv"), &rows)?;
    println!("separation,energy,two_c,gap,overlap");
    for r in &rows {
        println!("{},{},{},{},{:e}", r.separation, r.energy, r.two_c, r.gap, r.overlap);
    }
    Ok(true)
}

fn parse_vary(vary: &str) -> Result<(String, Vec<String>), Failure> {
    let Some((key, values)) = vary.split_once('=') else {
        return Err(Failure::Usage(format!("--vary expects key=v1,v2,..., got `{vary}`")));
    };
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        return Err(Failure::Usage(format!("--vary {key}: no values")));
    }
    Ok((key.trim().to_string(), values))
}

fn cmd_sweep(config: &Path, vary: &str, out: Option<PathBuf>) -> Result<bool, Failure> {
    let (key, values) = parse_vary(vary)?;
    // parse every variant first so a bad value fails before any solve
    let configs = values
        .iter()
        .map(|v| load_config(config, &[(key.clone(), v.clone())]))
        .collect::<Result<Vec<_>, _>>()?;
    let base = out_dir(out, &configs[0], "sweep");
    let results: Vec<Result<(bool, SummaryRow), Failure>> = configs
        .par_iter()
        .zip(&values)
        .map(|(cfg, v)| {
            let dir = base.join(format!("{key}={v}"));
            let (_, report, row) = solve_into(cfg, &dir)?;
            Ok((report.converged, row))
        })
        .collect();
    let mut table = format!("{key},{}\n", SUMMARY_COLUMNS.join(","));
    let mut all_converged = true;
    for (v, r) in values.iter().zip(results) {
        let (converged, row) = r?;
        all_converged &= converged;
        let iters = row.iterations.map(|i| i.to_string()).unwrap_or_default();
        table.push_str(&format!(
            "{v},{},{},{},{},{},{},{},{}\n",
            row.energy,
            row.h_norm_sq,
            row.nehari_residual,
            row.grad_residual,
            iters,
            row.nodal_total,
            row.symmetry_residual,
            row.decay_metric
        ));
    }
    fs::create_dir_all(&base).with_context(|| format!("creating {}", base.display()))?;
    fs::write(base.join("sweep.csv"), &table).with_context(|| "writing sweep.csv")?;
    print!("{table}");
    Ok(all_converged)
}

type ValidationCheck = fn() -> anyhow::Result<(bool, String)>;

/// One line per check; returns whether all passed.
fn cmd_validate() -> bool {
    let checks: [(&str, ValidationCheck); 7] = [
        ("stencil matches dense operator", check_stencil),
        ("dense eigenvalue matches inverse iteration", check_dense_eigen),
        ("oscillator eigenvalue, partial confinement", check_oscillator_partial),
        ("oscillator eigenvalue, full confinement", check_oscillator_full),
        ("finite-difference gradient", check_fd),
        ("Nehari scale vs dense scan", check_scan),
        ("hypothesis checker", check_hypotheses),
    ];
    let mut ok = true;
    for (name, check) in checks {
        match check() {
            Ok((pass, detail)) => {
                ok &= pass;
                println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
            }
            Err(e) => {
                ok = false;
                println!("FAIL {name}: {e:#}");
            }
        }
    }
    ok
}

fn check_stencil() -> anyhow::Result<(bool, String)> {
    let spec = Arc::new(GridSpec::new(3, 2, &[1.5, 2.0, 3.0], &[4, 5, 6])?);
    let v = potential_values(&spec);
    let a = dense_operator_matrix(&v)?;
    let mut worst: f64 = 0.0;
    for k in 0..spec.len() {
        let mut e = vec![0.0; spec.len()];
        e[k] = 1.0;
        let lap = laplacian_apply(&Field::from_values(&spec, e)?);
        for j in 0..spec.len() {
            let main = -lap.values()[j] + if j == k { v.values()[k] } else { 0.0 };
            worst = worst.max((main - a[(j, k)]).abs());
        }
    }
    let asym = (&a - a.transpose()).amax();
    Ok((
        worst <= 1e-12 && asym <= 1e-14,
        format!("max entry defect {worst:e}, asymmetry {asym:e}"),
    ))
}

fn check_dense_eigen() -> anyhow::Result<(bool, String)> {
    let spec = Arc::new(GridSpec::new(2, 1, &[4.0], &[15, 15])?);
    let v = potential_values(&spec);
    let dense = dense_smallest_eigenvalue(&dense_operator_matrix(&v)?);
    let (lambda, _) = linear_ground_eigenpair(&v, 1e-10)?;
    let rel = (lambda - dense).abs() / dense;
    Ok((rel <= 1e-8, format!("λ = {lambda}, dense {dense}, rel {rel:e}")))
}

fn check_oscillator_partial() -> anyhow::Result<(bool, String)> {
    let spec = Arc::new(GridSpec::new(2, 1, &[8.0], &[255, 255])?);
    let (lambda, _) = linear_ground_eigenpair(&potential_values(&spec), 1e-8)?;
    let want = 1.0 + (std::f64::consts::PI / 16.0).powi(2);
    Ok(((lambda - want).abs() <= 1e-2, format!("λ = {lambda}, expected {want}")))
}

fn check_oscillator_full() -> anyhow::Result<(bool, String)> {
    let spec = Arc::new(GridSpec::fully_confined(&[8.0, 8.0], &[127, 127])?);
    let (lambda, _) = linear_ground_eigenpair(&potential_values(&spec), 1e-8)?;
    Ok(((lambda - 2.0).abs() <= 1e-2, format!("λ = {lambda}, expected 2")))
}

fn check_fd() -> anyhow::Result<(bool, String)> {
    let spec = Arc::new(GridSpec::new(2, 1, &[3.0], &[15, 15])?);
    let v = potential_values(&spec);
    let model = NonlinearityModel::pure_power(4.0)?;
    let functional = Problem::new(&spec, model.clone()).functional();
    let u = Field::from_fn(&spec, |z| 1.3 * (-(z[0] * z[0] + 0.5 * z[1] * z[1])).exp());
    let grad = functional.first_variation(&u)?;
    let rep = fd_gradient_check(&u, &v, model.terms(), &grad, 8, &[1e-2, 1e-3, 1e-4], 11);
    let bound = 1e-6 * (1.0 + rep.energy.abs());
    let pass = rep.observed_order >= 1.9 && rep.defects[2] <= bound;
    Ok((
        pass,
        format!(
            "order {:.3}, defect {:e} (bound {bound:e})",
            rep.observed_order, rep.defects[2]
        ),
    ))
}

fn check_scan() -> anyhow::Result<(bool, String)> {
    let spec = Arc::new(GridSpec::new(2, 1, &[3.0], &[21, 21])?);
    let v = potential_values(&spec);
    let model = NonlinearityModel::pure_power(4.0)?;
    let functional = Problem::new(&spec, model.clone()).functional();
    let u = Field::from_fn(&spec, |z| {
        (1.0 + 0.4 * z[1]) * (-(z[0] * z[0] + z[1] * z[1]) / 2.0).exp()
    });
    let t = functional.nehari_scale(&u)?;
    let scan = dense_scale_scan(&u, &v, model.terms())?;
    let tol = oracle::tolerance("nehari_scale").expect("registered");
    let pass = tol.accepts(t, scan.t_root) && tol.accepts(scan.t_peak, scan.t_root) && scan.sign_changes == 1;
    Ok((
        pass,
        format!("t = {t}, scan root {}, scan peak {}", scan.t_root, scan.t_peak),
    ))
}

fn check_hypotheses() -> anyhow::Result<(bool, String)> {
    let p4 = NonlinearityModel::pure_power(4.0)?.check_hypotheses(3).all_passed();
    let mixed = NonlinearityModel::new(vec![
        nls_core::PowerTerm {
            coefficient: 1.0,
            exponent: 3.0,
        },
        nls_core::PowerTerm {
            coefficient: 1.0,
            exponent: 5.0,
        },
    ])?
    .check_hypotheses(3)
    .all_passed();
    let p7 = NonlinearityModel::pure_power(7.0)?.check_hypotheses(3);
    let named = p7.first_failure().map(|c| c.name);
    let pass = p4 && mixed && named == Some("f2");
    Ok((pass, format!("p=4 {p4}, p=3+5 {mixed}, p=7 fails at {named:?}")))
}
