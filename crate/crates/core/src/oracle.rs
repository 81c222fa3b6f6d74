//! Brute-force references for the main build. Nothing here calls the code it
//! checks: the stencil, energies and scans are enumerated from scratch.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::model::PowerTerm;

pub const DENSE_CAP: usize = 4096;
pub const SCAN_POINTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleTolerance {
    pub name: &'static str,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl OracleTolerance {
    pub fn accepts(&self, main: f64, oracle: f64) -> bool {
        (main - oracle).abs() <= self.abs_tol + self.rel_tol * oracle.abs()
    }
}

/// Log-grid spacing of the scan, as a ratio between neighbouring nodes.
pub fn scan_ratio() -> f64 {
    (12.0 * std::f64::consts::LN_10 / (SCAN_POINTS - 1) as f64).exp()
}

pub const TOLERANCES: &[OracleTolerance] = &[
    OracleTolerance {
        name: "laplacian_apply",
        abs_tol: 1e-12,
        rel_tol: 1e-12,
    },
    OracleTolerance {
        name: "linear_ground_eigenpair",
        abs_tol: 1e-14,
        rel_tol: 1e-8,
    },
    OracleTolerance {
        name: "sobolev_gradient",
        abs_tol: 1e-12,
        rel_tol: 1e-8,
    },
    // one scan step in t, relative
    OracleTolerance {
        name: "nehari_scale",
        abs_tol: 1e-300,
        rel_tol: 2.8e-3,
    },
    OracleTolerance {
        name: "fibering_max",
        abs_tol: 1e-300,
        rel_tol: 2.8e-3,
    },
    OracleTolerance {
        name: "first_variation",
        abs_tol: 1e-6,
        rel_tol: 1e-6,
    },
];

pub fn tolerance(name: &str) -> Option<OracleTolerance> {
    TOLERANCES.iter().copied().find(|t| t.name == name)
}

/// Lattice neighbours of `flat`, found by decoding and re-encoding the
/// multi-index by hand (independent of `GridSpec::stride`).
fn neighbours(spec: &GridSpec, flat: usize) -> Vec<(usize, usize)> {
    let dims = spec.total_dims();
    let n = spec.points_per_axis();
    let mut idx = vec![0usize; dims];
    let mut rest = flat;
    for a in (0..dims).rev() {
        idx[a] = rest % n[a];
        rest /= n[a];
    }
    let encode = |idx: &[usize]| idx.iter().zip(n).fold(0usize, |acc, (&i, &na)| acc * na + i);
    let mut out = Vec::with_capacity(2 * dims);
    for a in 0..dims {
        let mut j = idx.clone();
        if idx[a] > 0 {
            j[a] = idx[a] - 1;
            out.push((a, encode(&j)));
        }
        if idx[a] + 1 < n[a] {
            j[a] = idx[a] + 1;
            out.push((a, encode(&j)));
        }
    }
    out
}

fn inv_h2(spec: &GridSpec) -> Vec<f64> {
    (0..spec.total_dims())
        .map(|a| {
            let h = 2.0 * spec.half_width(a) / (spec.points(a) + 1) as f64;
            1.0 / (h * h)
        })
        .collect()
}

/// `(−Δ_h + V) u` by direct neighbour enumeration.
pub fn stencil_apply(potential: &Field, u: &[f64]) -> Vec<f64> {
    let spec = potential.spec();
    let w = inv_h2(spec);
    let diag: f64 = 2.0 * w.iter().sum::<f64>();
    (0..spec.len())
        .map(|k| {
            let mut acc = (diag + potential.values()[k]) * u[k];
            for (a, j) in neighbours(spec, k) {
                acc -= w[a] * u[j];
            }
            acc
        })
        .collect()
}

/// Explicit matrix of `−Δ_h + V`.
pub fn dense_operator_matrix(potential: &Field) -> Result<DMatrix<f64>> {
    let spec = potential.spec();
    let len = spec.len();
    if len > DENSE_CAP {
        return Err(Error::InvalidGrid(format!(
            "dense oracle needs at most {DENSE_CAP} points, grid has {len}"
        )));
    }
    let w = inv_h2(spec);
    let diag: f64 = 2.0 * w.iter().sum::<f64>();
    let mut a = DMatrix::zeros(len, len);
    for k in 0..len {
        a[(k, k)] = diag + potential.values()[k];
        for (axis, j) in neighbours(spec, k) {
            a[(k, j)] = -w[axis];
        }
    }
    Ok(a)
}

pub fn dense_smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

/// `Q(u) = ∫|∇u|² + ∫Vu²` and the moments `∫|u|^p` for each term.
fn quadratic_and_moments(u: &Field, potential: &Field, terms: &[PowerTerm]) -> (f64, Vec<f64>) {
    let cell = u.spec().cell_volume();
    let au = stencil_apply(potential, u.values());
    let q = u.values().iter().zip(&au).map(|(a, b)| a * b).sum::<f64>() * cell;
    let moments = terms
        .iter()
        .map(|t| u.values().iter().map(|v| v.abs().powf(t.exponent)).sum::<f64>() * cell)
        .collect();
    (q, moments)
}

/// `I(u)` evaluated independently. An empty `terms` is the linear problem.
pub fn oracle_energy(u: &Field, potential: &Field, terms: &[PowerTerm]) -> f64 {
    let (q, m) = quadratic_and_moments(u, potential, terms);
    0.5 * q
        - terms
            .iter()
            .zip(&m)
            .map(|(t, mj)| t.coefficient / t.exponent * mj)
            .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanResult {
    /// Node minimizing `|⟨I'(tu), tu⟩| / t²`.
    pub t_root: f64,
    /// Node maximizing `I(tu)`.
    pub t_peak: f64,
    pub peak_energy: f64,
    /// Sign changes of the Nehari residual across the grid.
    pub sign_changes: usize,
}

pub fn dense_scale_scan(u: &Field, potential: &Field, terms: &[PowerTerm]) -> Result<ScanResult> {
    if u.values().iter().all(|&v| v == 0.0) {
        return Err(Error::Domain("scale scan of the zero field".into()));
    }
    let (q, m) = quadratic_and_moments(u, potential, terms);
    let lo = 1e-6f64.ln();
    let step = (1e6f64.ln() - lo) / (SCAN_POINTS - 1) as f64;
    let mut best_root = (f64::INFINITY, 0.0);
    let mut best_peak = (f64::NEG_INFINITY, 0.0);
    let mut sign_changes = 0;
    let mut last_sign = 0.0;
    for i in 0..SCAN_POINTS {
        let t = (lo + step * i as f64).exp();
        let mut energy = 0.5 * t * t * q;
        // residual / t²
        let mut reduced = q;
        for (term, mj) in terms.iter().zip(&m) {
            let tp = t.powf(term.exponent);
            energy -= term.coefficient / term.exponent * tp * mj;
            reduced -= term.coefficient * tp / (t * t) * mj;
        }
        if reduced.abs() < best_root.0 {
            best_root = (reduced.abs(), t);
        }
        if energy > best_peak.0 {
            best_peak = (energy, t);
        }
        let s = reduced.signum();
        if reduced != 0.0 {
            if last_sign != 0.0 && s != last_sign {
                sign_changes += 1;
            }
            last_sign = s;
        }
    }
    Ok(ScanResult {
        t_root: best_root.1,
        t_peak: best_peak.1,
        peak_energy: best_peak.0,
        sign_changes,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    /// Worst defect over directions, one entry per `ε`.
    pub defects: Vec<f64>,
    /// Smallest observed order between consecutive `ε`.
    pub observed_order: f64,
    pub energy: f64,
}

impl FdReport {
    pub fn max_defect(&self) -> f64 {
        self.defects.iter().copied().fold(0.0, f64::max)
    }
}

/// Central differences of `I` along seeded random directions (unit L² norm)
/// against `∫ v · gradient`. `gradient` is the first variation under test.
pub fn fd_gradient_check(
    u: &Field,
    potential: &Field,
    terms: &[PowerTerm],
    gradient: &Field,
    directions: usize,
    eps: &[f64],
    seed: u64,
) -> FdReport {
    let cell = u.spec().cell_volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defects = vec![0.0f64; eps.len()];
    for _ in 0..directions {
        let mut v: Vec<f64> = (0..u.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = (v.iter().map(|x| x * x).sum::<f64>() * cell).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let analytic = v.iter().zip(gradient.values()).map(|(a, b)| a * b).sum::<f64>() * cell;
        let mut d = Vec::with_capacity(eps.len());
        for &e in eps {
            let plus = Field::from_values(u.spec(), u.values().iter().zip(&v).map(|(a, b)| a + e * b).collect())
                .expect("same grid");
            let minus = Field::from_values(u.spec(), u.values().iter().zip(&v).map(|(a, b)| a - e * b).collect())
                .expect("same grid");
            let fd = (oracle_energy(&plus, potential, terms) - oracle_energy(&minus, potential, terms)) / (2.0 * e);
            d.push((fd - analytic).abs());
        }
        for (slot, &x) in defects.iter_mut().zip(&d) {
            *slot = slot.max(x);
        }
    }
    // order from the worst-case curve; pairs already at round-off are skipped
    let mut order = f64::INFINITY;
    for i in 1..eps.len() {
        let (d0, d1) = (defects[i - 1], defects[i]);
        if d0 > 1e-11 && d1 > 1e-11 {
            order = order.min((d0 / d1).ln() / (eps[i - 1] / eps[i]).ln());
        }
    }
    FdReport {
        defects,
        observed_order: order,
        energy: oracle_energy(u, potential, terms),
    }
}
