//! Nehari-projected Sobolev-gradient descent inside a symmetry subspace, and
//! inverse power iteration for the linear operator.

use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{summarize, FieldSummary};
use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::io::read_field;
use crate::linalg::{conjugate_gradient, default_max_iter, SchrodingerOperator};
use crate::model::{potential_values, NonlinearityModel};
use crate::symmetry::{SymmetryConstraint, SymmetryGroup};
use crate::variational::{Branch, Functional};

/// Slack allowed on the monotone-energy check.
const ENERGY_SLACK: f64 = 1e-12;
const MAX_BACKTRACKS: usize = 60;
const RESEED_ATTEMPTS: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    Fixed(f64),
    Armijo { eta: f64, c1: f64, backtrack: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        Self::Armijo {
            eta: 1.0,
            c1: 1e-4,
            backtrack: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// Gaussian envelope times the sign pattern of the constraint. An empty
    /// center means the origin.
    Gaussian {
        center: Vec<f64>,
        width: f64,
    },
    /// Uniform noise under a unit Gaussian envelope.
    Random,
    File(PathBuf),
}

impl Default for Init {
    fn default() -> Self {
        Self::Gaussian {
            center: Vec::new(),
            width: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `‖g‖_H / ‖u‖_H ≤ grad_tol` and `‖r‖ / ‖u‖ ≤ 10 grad_tol`.
    pub grad_tol: f64,
    pub step_rule: StepRule,
    pub lin_tol: f64,
    pub seed: u64,
    pub init: Init,
    /// Relative amplitude of seeded multiplicative noise on the Gaussian start.
    pub init_noise: f64,
    pub constraint: SymmetryConstraint,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-6,
            step_rule: StepRule::default(),
            lin_tol: 1e-10,
            seed: 0,
            init: Init::default(),
            init_noise: 0.0,
            constraint: SymmetryConstraint::FullSpace,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol = {} must be positive", self.grad_tol));
        }
        if !(self.lin_tol > 0.0 && self.lin_tol < 1.0) {
            return bad(format!("lin_tol = {} must lie in (0, 1)", self.lin_tol));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return bad(format!("init_noise = {} must be >= 0", self.init_noise));
        }
        match self.step_rule {
            StepRule::Fixed(eta) if !(eta > 0.0) => bad(format!("step eta = {eta} must be positive")),
            StepRule::Armijo { eta, c1, backtrack } => {
                if !(eta > 0.0) {
                    bad(format!("step eta = {eta} must be positive"))
                } else if !(c1 > 0.0 && c1 < 1.0) {
                    bad(format!("c1 = {c1} must lie in (0, 1)"))
                } else if !(backtrack > 0.0 && backtrack < 1.0) {
                    bad(format!("backtrack = {backtrack} must lie in (0, 1)"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }?;
        if let Init::Gaussian { width, .. } = &self.init {
            if !(*width > 0.0) {
                return bad(format!("init width = {width} must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub energy: f64,
    /// `‖g‖_H / ‖u‖_H` of the Sobolev gradient at this iterate.
    pub residual: f64,
    pub h_norm_sq: f64,
    pub nehari_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub final_energy: f64,
    pub h_norm_sq: f64,
    pub nehari_residual: f64,
    pub grad_residual: f64,
    pub iterations: usize,
    pub nodal_count: usize,
    pub symmetry_residual: f64,
    pub decay_metric: f64,
    pub min_interior_value: f64,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    /// Some group element acts through interpolation.
    pub approximate: bool,
    pub summary: FieldSummary,
}

/// Everything a solve needs besides its configuration.
#[derive(Clone, Debug)]
pub struct Problem {
    spec: Arc<GridSpec>,
    model: NonlinearityModel,
    potential: Field,
}

impl Problem {
    pub fn new(spec: &Arc<GridSpec>, model: NonlinearityModel) -> Self {
        Self {
            spec: spec.clone(),
            potential: potential_values(spec),
            model,
        }
    }

    pub fn spec(&self) -> &Arc<GridSpec> {
        &self.spec
    }

    pub fn model(&self) -> &NonlinearityModel {
        &self.model
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    /// The functional whose value is reported: `I` itself.
    pub fn functional(&self) -> Functional {
        Functional::new(self.model.clone(), self.potential.clone())
    }
}

/// Pattern that makes the Gaussian start non-trivial in the constrained space.
fn sign_pattern(constraint: &SymmetryConstraint, z: &[f64], coefficients: &[f64]) -> f64 {
    match constraint {
        SymmetryConstraint::FullSpace => 1.0,
        SymmetryConstraint::KOdd(k) => z[..*k].iter().product(),
        SymmetryConstraint::CyclicOdd(ell) => {
            // Re or Im of (x₁ + i x₂)^ℓ, whichever is odd in x₁
            let r = z[0].hypot(z[1]);
            let theta = z[1].atan2(z[0]);
            let ell = *ell as i32;
            let phase = ell as f64 * theta;
            r.powi(ell) * if ell % 2 == 1 { phase.cos() } else { phase.sin() }
        }
        SymmetryConstraint::GInvariant { generators, .. } => {
            let m = generators.first().map_or(0, |g| g.dim());
            let x = &z[..m];
            let mut value = coefficients[0];
            let mut c = 1;
            for i in 0..m {
                value += coefficients[c % coefficients.len()] * x[i];
                c += 1;
                for j in i..m {
                    value += coefficients[c % coefficients.len()] * x[i] * x[j];
                    c += 1;
                    for k in j..m {
                        value += coefficients[c % coefficients.len()] * x[i] * x[j] * x[k];
                        c += 1;
                    }
                }
            }
            value
        }
    }
}

fn initial_field(problem: &Problem, config: &SolverConfig, seed: u64) -> Result<Field> {
    let spec = &problem.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match &config.init {
        Init::File(path) => {
            let u = read_field(path)?;
            if **u.spec() != **spec {
                return Err(Error::InvalidConfig(format!(
                    "initial field {} lives on a different grid",
                    path.display()
                )));
            }
            Ok(u)
        }
        Init::Gaussian { center, width } => {
            if !center.is_empty() && center.len() != spec.total_dims() {
                return Err(Error::InvalidConfig(format!(
                    "init center has {} coordinates, grid has {}",
                    center.len(),
                    spec.total_dims()
                )));
            }
            let coefficients: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
            let envelope = Field::from_fn(spec, |z| {
                let r2: f64 = z
                    .iter()
                    .enumerate()
                    .map(|(a, &x)| (x - center.get(a).copied().unwrap_or(0.0)).powi(2))
                    .sum();
                (-r2 / (2.0 * width * width)).exp() * sign_pattern(&config.constraint, z, &coefficients)
            });
            if config.init_noise == 0.0 {
                return Ok(envelope);
            }
            let noise: Vec<f64> = (0..spec.len())
                .map(|_| 1.0 + config.init_noise * rng.random_range(-1.0..1.0))
                .collect();
            Ok(Field::from_raw(
                spec,
                envelope.values().iter().zip(&noise).map(|(e, n)| e * n).collect(),
            ))
        }
        Init::Random => {
            let noise: Vec<f64> = (0..spec.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let envelope = Field::from_fn(spec, |z| (-z.iter().map(|x| x * x).sum::<f64>() / 2.0).exp());
            Ok(Field::from_raw(
                spec,
                envelope.values().iter().zip(&noise).map(|(e, n)| e * n).collect(),
            ))
        }
    }
}

/// Seeds, symmetrizes and projects a start; reseeds when the projection of the
/// seed onto the invariant subspace vanishes.
fn starting_point(
    problem: &Problem,
    config: &SolverConfig,
    descent: &Functional,
    group: &SymmetryGroup,
) -> Result<Field> {
    let mut last = None;
    for attempt in 0..RESEED_ATTEMPTS {
        let seed = config.seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut trial = config.clone();
        if attempt > 0 && matches!(trial.init, Init::Gaussian { .. }) {
            trial.init_noise = trial.init_noise.max(0.5);
        }
        if attempt > 0 && matches!(trial.init, Init::File(_)) {
            trial.init = Init::Random;
        }
        let u = group.symmetrize(&initial_field(problem, &trial, seed)?)?;
        match descent.project(&u) {
            Ok((w, _)) => return Ok(w),
            Err(e @ Error::Domain(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Domain("initial field vanished".into())))
}

/// Minimizes `I` over the Nehari set of the constraint's invariant subspace.
///
/// In the unconstrained case the descent runs on `I₊` and returns `|u|`, which
/// is the positive ground state.
pub fn solve_constrained_ground_state(problem: &Problem, config: &SolverConfig) -> Result<(Field, SolveReport)> {
    config.validate()?;
    let spec = problem.spec();
    let group = SymmetryGroup::new(spec, &config.constraint)?;
    let full_space = config.constraint == SymmetryConstraint::FullSpace;
    let descent = problem
        .functional()
        .with_branch(if full_space { Branch::PositivePart } else { Branch::Full });

    let mut u = starting_point(problem, config, &descent, &group)?;
    let mut energy = descent.energy(&u)?.total;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    loop {
        let (g, r) = descent.sobolev_gradient_with_residual(&u, config.lin_tol)?;
        let g_sq = descent.h_norm_sq(&g)?;
        let u_sq = descent.h_norm_sq(&u)?;
        let residual = (g_sq / u_sq).sqrt();
        trace.push(TraceEntry {
            iteration: iterations,
            energy,
            residual,
            h_norm_sq: u_sq,
            nehari_residual: descent.nehari_residual(&u)?,
        });
        let stationary = r.dot(&r).sqrt() / u.dot(&u).sqrt() <= 10.0 * config.grad_tol;
        if residual <= config.grad_tol && stationary {
            converged = true;
            break;
        }
        if iterations == config.max_iters {
            break;
        }
        // slope of the projected energy along −g is −⟨g, r⟩ = −‖g‖²_H
        let slope = g.inner_l2(&r);
        let step = |eta: f64| -> Result<(Field, f64)> {
            let moved = group.symmetrize(&u.add_scaled(-eta, &g))?;
            let (projected, _) = descent.project(&moved)?;
            let e = descent.energy(&projected)?.total;
            Ok((projected, e))
        };
        let accepted = match config.step_rule {
            StepRule::Fixed(eta) => {
                let (w, e) = step(eta)?;
                if e > energy + ENERGY_SLACK * energy.abs().max(1.0) {
                    return Err(Error::Consistency(format!(
                        "energy rose from {energy} to {e} at iteration {}",
                        iterations + 1
                    )));
                }
                Some((w, e))
            }
            StepRule::Armijo { eta, c1, backtrack } => {
                let mut eta = eta;
                let mut found = None;
                for _ in 0..MAX_BACKTRACKS {
                    match step(eta) {
                        Ok((w, e)) if e <= energy - c1 * eta * slope => {
                            found = Some((w, e));
                            break;
                        }
                        Ok(_) | Err(Error::Domain(_)) | Err(Error::NumericalOverflow(_)) => {}
                        Err(e) => return Err(e),
                    }
                    eta *= backtrack;
                }
                found
            }
        };
        let Some((w, e)) = accepted else {
            // no step decreases the energy measurably: stagnation at roundoff
            break;
        };
        u = w;
        energy = e;
        iterations += 1;
    }

    if full_space {
        u = u.abs();
    }
    let summary = summarize(&problem.functional(), &group, &u)?;
    let report = SolveReport {
        final_energy: summary.energy,
        h_norm_sq: summary.h_norm_sq,
        nehari_residual: summary.nehari_residual,
        grad_residual: summary.grad_residual,
        iterations,
        nodal_count: summary.nodal.total,
        symmetry_residual: summary.symmetry_residual,
        decay_metric: summary.decay_metric,
        min_interior_value: summary.min_interior_value,
        trace,
        converged,
        approximate: group.is_approximate(),
        summary,
    };
    if !report.final_energy.is_finite() {
        return Err(Error::NumericalOverflow("final energy"));
    }
    Ok((u, report))
}

#[derive(Clone, Debug)]
pub struct MultiStart {
    pub best: Field,
    pub best_index: usize,
    pub reports: Vec<SolveReport>,
}

impl MultiStart {
    pub fn best_report(&self) -> &SolveReport {
        &self.reports[self.best_index]
    }

    /// `(max − min) / |min|` of the converged final energies.
    pub fn relative_spread(&self) -> f64 {
        let energies: Vec<f64> = self
            .reports
            .iter()
            .filter(|r| r.converged)
            .map(|r| r.final_energy)
            .collect();
        let lo = energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if energies.is_empty() {
            f64::NAN
        } else {
            (hi - lo) / lo.abs()
        }
    }
}

/// Runs starts with seeds `seed, seed+1, …` concurrently and keeps the
/// lowest-energy converged run.
pub fn multi_start(problem: &Problem, config: &SolverConfig, n_starts: usize) -> Result<MultiStart> {
    if n_starts == 0 {
        return Err(Error::InvalidConfig("n_starts must be >= 1".into()));
    }
    let runs: Vec<Result<(Field, SolveReport)>> = (0..n_starts)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = config.seed.wrapping_add(i as u64);
            solve_constrained_ground_state(problem, &c)
        })
        .collect();
    let mut best: Option<(usize, Field)> = None;
    let mut reports = Vec::with_capacity(n_starts);
    for (i, run) in runs.into_iter().enumerate() {
        let (u, report) = run?;
        let better = report.converged
            && best
                .as_ref()
                .is_none_or(|(b, _)| report.final_energy < reports_energy(&reports, *b));
        if better {
            best = Some((i, u));
        }
        reports.push(report);
    }
    let (best_index, best) = best.ok_or(Error::AllStartsFailed(n_starts))?;
    Ok(MultiStart {
        best,
        best_index,
        reports,
    })
}

fn reports_energy(reports: &[SolveReport], i: usize) -> f64 {
    reports[i].final_energy
}

/// Smallest eigenpair of `-Δ_h + V` by inverse iteration. The eigenvector is
/// positive and normalized to `∫φ² = 1`; iteration stops once
/// `‖Aφ − λφ‖_{L²} ≤ tol`.
pub fn linear_ground_eigenpair(potential: &Field, tol: f64) -> Result<(f64, Field)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("eigen tolerance {tol} must be positive")));
    }
    const MAX_OUTER: usize = 20_000;
    let spec = potential.spec();
    let op = SchrodingerOperator::new(potential);
    let cell = spec.cell_volume();
    let normalize = |v: &mut Vec<f64>| {
        let n = (Field::from_raw(spec, v.clone()).dot(&Field::from_raw(spec, v.clone())) * cell).sqrt();
        v.iter_mut().for_each(|x| *x /= n);
    };
    let mut x: Vec<f64> = Field::from_fn(spec, |z| (-z.iter().map(|c| c * c).sum::<f64>() / 2.0).exp()).into_values();
    normalize(&mut x);
    let mut ax = vec![0.0; x.len()];
    let mut lambda;
    let mut residual = f64::INFINITY;
    let max_cg = 20 * default_max_iter(spec);
    for _ in 0..MAX_OUTER {
        op.apply_into(&x, &mut ax);
        let xf = Field::from_raw(spec, x.clone());
        let axf = Field::from_raw(spec, ax.clone());
        lambda = xf.dot(&axf) / xf.dot(&xf);
        let r = axf.add_scaled(-lambda, &xf);
        residual = (r.dot(&r) * cell).sqrt();
        if residual <= tol {
            let phi = Field::from_raw(spec, x);
            let phi = if phi.values().iter().sum::<f64>() < 0.0 {
                phi.scaled(-1.0)
            } else {
                phi
            };
            return Ok((lambda, phi));
        }
        let mut y: Vec<f64> = x.iter().map(|v| v / lambda).collect();
        conjugate_gradient(&op, &x, &mut y, (0.01 * tol).max(1e-14), max_cg)?;
        x = y;
        normalize(&mut x);
    }
    Err(Error::EigenSolve {
        iterations: MAX_OUTER,
        residual,
    })
}

/// Orbit pattern of the default start, exposed for tests of the reseeding rule.
pub fn default_start(problem: &Problem, config: &SolverConfig) -> Result<Field> {
    let group = SymmetryGroup::new(problem.spec(), &config.constraint)?;
    group.symmetrize(&initial_field(problem, config, config.seed)?)
}
