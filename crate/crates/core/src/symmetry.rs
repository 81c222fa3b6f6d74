//! Group actions on grid functions.
//!
//! A group element is an orthogonal map on the confined block `x`, identity on
//! `y`, and acts by `(g∘u)(z) = τ(g) u(g⁻¹z)`. Signed permutations between
//! axes with identical discretization map nodes onto nodes and act by index
//! tables; anything else (rotations of order other than 1, 2, 4) falls back to
//! multilinear interpolation and is flagged approximate.

use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{pairwise_sum, Field, GridSpec};
use crate::variational::Functional;

const MATRIX_TOL: f64 = 1e-9;
const MAX_GROUP_ORDER: usize = 4096;

/// Orthogonal map on the confined coordinates, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupElement {
    dim: usize,
    matrix: Vec<f64>,
}

fn snap(x: f64) -> f64 {
    for target in [-1.0, 0.0, 1.0] {
        if (x - target).abs() < 1e-12 {
            return target;
        }
    }
    x
}

impl GroupElement {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 1.0;
        }
        Self { dim, matrix }
    }

    pub fn from_matrix(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != dim * dim || dim == 0 {
            return Err(Error::InvalidSymmetry(format!(
                "expected a {dim}x{dim} matrix, got {} entries",
                matrix.len()
            )));
        }
        let g = Self {
            dim,
            matrix: matrix.into_iter().map(snap).collect(),
        };
        let gram = g.inverse().compose(&g);
        if !gram.approx_eq(&Self::identity(dim)) {
            return Err(Error::InvalidSymmetry("generator is not orthogonal".into()));
        }
        Ok(g)
    }

    /// Reflection `x_axis ↦ −x_axis`.
    pub fn reflection(dim: usize, axis: usize) -> Self {
        let mut g = Self::identity(dim);
        g.matrix[axis * dim + axis] = -1.0;
        g
    }

    /// `(g z)_i = signs[i] · z[sources[i]]`.
    pub fn signed_permutation(sources: &[usize], signs: &[f64]) -> Result<Self> {
        let dim = sources.len();
        if signs.len() != dim {
            return Err(Error::InvalidSymmetry("sources and signs differ in length".into()));
        }
        let mut seen = vec![false; dim];
        let mut matrix = vec![0.0; dim * dim];
        for (i, (&s, &sign)) in sources.iter().zip(signs).enumerate() {
            if s >= dim || seen[s] {
                return Err(Error::InvalidSymmetry(format!(
                    "axis list {sources:?} is not a permutation"
                )));
            }
            if sign != 1.0 && sign != -1.0 {
                return Err(Error::InvalidSymmetry(format!("sign {sign} is not ±1")));
            }
            seen[s] = true;
            matrix[i * dim + s] = sign;
        }
        Ok(Self { dim, matrix })
    }

    /// Counter-clockwise rotation by `angle` in the `x₁x₂` plane.
    pub fn planar_rotation(dim: usize, angle: f64) -> Self {
        let mut g = Self::identity(dim);
        let (s, c) = angle.sin_cos();
        g.matrix[0] = snap(c);
        g.matrix[1] = snap(-s);
        g.matrix[dim] = snap(s);
        g.matrix[dim + 1] = snap(c);
        g
    }

    /// Reflection across the line at angle `theta` in the `x₁x₂` plane.
    pub fn planar_reflection(dim: usize, theta: f64) -> Self {
        let mut g = Self::identity(dim);
        let (s, c) = (2.0 * theta).sin_cos();
        g.matrix[0] = snap(c);
        g.matrix[1] = snap(s);
        g.matrix[dim] = snap(s);
        g.matrix[dim + 1] = snap(-c);
        g
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[i * d + j] = snap((0..d).map(|k| self.matrix[i * d + k] * other.matrix[k * d + j]).sum());
            }
        }
        Self { dim: d, matrix }
    }

    pub fn inverse(&self) -> Self {
        let d = self.dim;
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                matrix[j * d + i] = self.matrix[i * d + j];
            }
        }
        Self { dim: d, matrix }
    }

    pub fn power(&self, k: usize) -> Self {
        (0..k).fold(Self::identity(self.dim), |acc, _| acc.compose(self))
    }

    pub fn approx_eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self
                .matrix
                .iter()
                .zip(&other.matrix)
                .all(|(a, b)| (a - b).abs() < MATRIX_TOL)
    }

    /// `(sources, signs)` when the matrix is a signed permutation.
    pub fn as_signed_permutation(&self) -> Option<(Vec<usize>, Vec<f64>)> {
        let d = self.dim;
        let mut sources = Vec::with_capacity(d);
        let mut signs = Vec::with_capacity(d);
        for i in 0..d {
            let row = &self.matrix[i * d..(i + 1) * d];
            let nonzero: Vec<usize> = (0..d).filter(|&j| row[j] != 0.0).collect();
            match nonzero.as_slice() {
                [j] if row[*j].abs() == 1.0 => {
                    sources.push(*j);
                    signs.push(row[*j]);
                }
                _ => return None,
            }
        }
        Some((sources, signs))
    }

    /// True when the element permutes the nodes of `spec` exactly.
    pub fn is_grid_exact(&self, spec: &GridSpec) -> bool {
        self.as_signed_permutation()
            .is_some_and(|(src, _)| src.iter().enumerate().all(|(i, &s)| spec.axes_match(i, s)))
    }

    fn apply_point(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        for i in 0..d {
            out[i] = (0..d).map(|k| self.matrix[i * d + k] * x[k]).sum();
        }
    }
}

/// Invariant subspace that descent is confined to.
#[derive(Clone, Debug, PartialEq)]
pub enum SymmetryConstraint {
    FullSpace,
    /// Odd in each of `x₁ … x_k`.
    KOdd(usize),
    /// Invariant under the `2π/ℓ` rotation in the `x₁x₂` plane and odd in `x₁`.
    CyclicOdd(usize),
    /// User generators with parities `τ ∈ {−1, +1}`.
    GInvariant {
        generators: Vec<GroupElement>,
        parities: Vec<f64>,
    },
}

impl SymmetryConstraint {
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        let m = spec.confined_dims();
        match self {
            Self::FullSpace => Ok(()),
            Self::KOdd(k) if *k == 0 || *k > m => Err(Error::InvalidSymmetry(format!(
                "k-odd symmetry needs 1 <= k <= m, got k = {k}, m = {m}"
            ))),
            Self::KOdd(_) => Ok(()),
            Self::CyclicOdd(ell) if *ell == 0 => {
                Err(Error::InvalidSymmetry("rotation order must be at least 1".into()))
            }
            Self::CyclicOdd(_) if m < 2 => Err(Error::InvalidSymmetry(format!(
                "cyclic symmetry needs m >= 2, got m = {m}"
            ))),
            Self::CyclicOdd(_) => Ok(()),
            Self::GInvariant { generators, parities } => {
                if generators.len() != parities.len() {
                    return Err(Error::InvalidSymmetry("one parity per generator required".into()));
                }
                if let Some(g) = generators.iter().find(|g| g.dim() != m) {
                    return Err(Error::InvalidSymmetry(format!(
                        "generator acts on {} axes but the confined block has {m}",
                        g.dim()
                    )));
                }
                if let Some(t) = parities.iter().find(|&&t| t != 1.0 && t != -1.0) {
                    return Err(Error::InvalidSymmetry(format!("parity {t} is not ±1")));
                }
                Ok(())
            }
        }
    }

    /// Generators of the group whose invariant subspace is the constraint.
    pub fn generators(&self, m: usize) -> Vec<(GroupElement, f64)> {
        match self {
            Self::FullSpace => Vec::new(),
            Self::KOdd(k) => (0..*k).map(|i| (GroupElement::reflection(m, i), -1.0)).collect(),
            Self::CyclicOdd(ell) => vec![
                (GroupElement::planar_rotation(m, TAU / *ell as f64), 1.0),
                (GroupElement::reflection(m, 0), -1.0),
            ],
            Self::GInvariant { generators, parities } => {
                generators.iter().cloned().zip(parities.iter().copied()).collect()
            }
        }
    }

    /// Generators checked by the residual diagnostic. The full space has no
    /// imposed symmetry, so its diagnostic is the emergent evenness in each
    /// confined coordinate.
    pub fn diagnostic_generators(&self, m: usize) -> Vec<(GroupElement, f64)> {
        match self {
            Self::FullSpace => (0..m).map(|i| (GroupElement::reflection(m, i), 1.0)).collect(),
            _ => self.generators(m),
        }
    }
}

/// Closes a generator set under composition, checking that the parity is a
/// homomorphism on the whole group.
pub fn close_group(dim: usize, generators: &[(GroupElement, f64)]) -> Result<Vec<(GroupElement, f64)>> {
    let mut elements = vec![(GroupElement::identity(dim), 1.0)];
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for (g, tg) in generators {
            let candidate = g.compose(&elements[i].0);
            let parity = tg * elements[i].1;
            match elements.iter().find(|(e, _)| e.approx_eq(&candidate)) {
                Some((_, t)) if *t != parity => {
                    return Err(Error::InvalidSymmetry(
                        "parity is not a homomorphism: one group element receives both signs".into(),
                    ))
                }
                Some(_) => {}
                None => {
                    if elements.len() == MAX_GROUP_ORDER {
                        return Err(Error::InvalidSymmetry(format!(
                            "generated group exceeds {MAX_GROUP_ORDER} elements"
                        )));
                    }
                    elements.push((candidate, parity));
                    queue.push_back(elements.len() - 1);
                }
            }
        }
    }
    Ok(elements)
}

/// Pull-back `u ↦ u(g⁻¹ ·)` as a per-node recipe.
#[derive(Clone, Debug)]
enum Action {
    Exact(Vec<usize>),
    Interpolated {
        offsets: Vec<usize>,
        entries: Vec<(usize, f64)>,
    },
}

impl Action {
    fn build(spec: &GridSpec, g: &GroupElement, allow_interpolation: bool) -> Result<Self> {
        let inv = g.inverse();
        if let Some((src, sign)) = inv.as_signed_permutation() {
            if g.is_grid_exact(spec) {
                return Ok(Self::Exact(exact_table(spec, &src, &sign)));
            }
        }
        if !allow_interpolation {
            return Err(Error::NotGridExact(format!("{:?}", g.matrix())));
        }
        Ok(interpolation_table(spec, &inv))
    }

    #[inline]
    fn value(&self, u: &[f64], j: usize) -> f64 {
        match self {
            Self::Exact(t) => u[t[j]],
            Self::Interpolated { offsets, entries } => {
                entries[offsets[j]..offsets[j + 1]].iter().map(|&(i, w)| w * u[i]).sum()
            }
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, Self::Exact(_))
    }
}

/// Index of `M z_j` for every node, `M` a node-preserving signed permutation.
fn exact_table(spec: &GridSpec, src: &[usize], sign: &[f64]) -> Vec<usize> {
    let nd = spec.total_dims();
    (0..spec.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; nd], vec![0usize; nd]),
            |(idx, out), j| {
                spec.multi_index(j, idx);
                out.copy_from_slice(idx);
                for (i, (&s, &sg)) in src.iter().zip(sign).enumerate() {
                    out[i] = if sg > 0.0 { idx[s] } else { spec.points(s) - 1 - idx[s] };
                }
                spec.flat_index(out)
            },
        )
        .collect()
}

/// Multilinear weights for sampling at `M z_j`.
fn interpolation_table(spec: &GridSpec, m_map: &GroupElement) -> Action {
    let nd = spec.total_dims();
    let m = spec.confined_dims();
    let rows: Vec<Vec<(usize, f64)>> = (0..spec.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; nd], vec![0.0; nd], vec![0.0; m]),
            |(idx, z, w), j| {
                spec.multi_index(j, idx);
                spec.coordinates(j, z);
                m_map.apply_point(&z[..m], w);
                let mut corners: Vec<(Vec<usize>, f64)> = vec![(idx.clone(), 1.0)];
                for a in 0..m {
                    let n = spec.points(a) as i64;
                    let q = (w[a] + spec.half_width(a)) / spec.spacing(a) - 1.0;
                    let r = q.round();
                    let taps: Vec<(i64, f64)> = if (q - r).abs() < 1e-9 {
                        vec![(r as i64, 1.0)]
                    } else {
                        let i0 = q.floor();
                        let frac = q - i0;
                        vec![(i0 as i64, 1.0 - frac), (i0 as i64 + 1, frac)]
                    };
                    let taps: Vec<(usize, f64)> = taps
                        .into_iter()
                        .filter(|&(i, _)| i >= 0 && i < n)
                        .map(|(i, wt)| (i as usize, wt))
                        .collect();
                    corners = corners
                        .into_iter()
                        .flat_map(|(c, cw)| {
                            taps.iter().map(move |&(i, tw)| {
                                let mut c = c.clone();
                                c[a] = i;
                                (c, cw * tw)
                            })
                        })
                        .collect();
                }
                corners.into_iter().map(|(c, wt)| (spec.flat_index(&c), wt)).collect()
            },
        )
        .collect();
    let mut offsets = Vec::with_capacity(rows.len() + 1);
    offsets.push(0);
    let mut entries = Vec::new();
    for row in rows {
        entries.extend(row);
        offsets.push(entries.len());
    }
    Action::Interpolated { offsets, entries }
}

/// A constraint compiled against a grid: the closed group, its node tables, and
/// orbit representatives for exact averaging.
#[derive(Clone, Debug)]
pub struct SymmetryGroup {
    spec: Arc<GridSpec>,
    constraint: SymmetryConstraint,
    parities: Vec<f64>,
    actions: Vec<Action>,
    orbits: Option<Orbits>,
    diagnostics: Vec<(f64, Action)>,
}

/// For each node `j`, `u[j] = sign[j] · u[rep[j]]` on the invariant subspace;
/// `sign[j] = 0` marks nodes forced to zero.
#[derive(Clone, Debug)]
struct Orbits {
    rep: Vec<usize>,
    sign: Vec<f64>,
}

impl SymmetryGroup {
    pub fn new(spec: &Arc<GridSpec>, constraint: &SymmetryConstraint) -> Result<Self> {
        constraint.validate(spec)?;
        let m = spec.confined_dims();
        let elements = close_group(m, &constraint.generators(m))?;
        let actions = elements
            .iter()
            .map(|(g, _)| Action::build(spec, g, true))
            .collect::<Result<Vec<_>>>()?;
        let parities: Vec<f64> = elements.iter().map(|(_, t)| *t).collect();
        let orbits = actions
            .iter()
            .all(Action::is_exact)
            .then(|| compute_orbits(spec.len(), &actions, &parities));
        let diagnostics = constraint
            .diagnostic_generators(m)
            .iter()
            .map(|(g, t)| Ok((*t, Action::build(spec, g, true)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            constraint: constraint.clone(),
            parities,
            actions,
            orbits,
            diagnostics,
        })
    }

    pub fn constraint(&self) -> &SymmetryConstraint {
        &self.constraint
    }

    pub fn order(&self) -> usize {
        self.actions.len()
    }

    /// True when some element needs interpolation.
    pub fn is_approximate(&self) -> bool {
        self.orbits.is_none()
    }

    /// Orbit average `(1/|G|) Σ τ(g) u(g⁻¹ z)`.
    pub fn symmetrize(&self, u: &Field) -> Result<Field> {
        if **u.spec() != *self.spec {
            return Err(Error::GridMismatch);
        }
        let vals = u.values();
        let order = self.order() as f64;
        let average = |j: usize, buf: &mut Vec<f64>| {
            buf.clear();
            buf.extend(
                self.actions
                    .iter()
                    .zip(&self.parities)
                    .map(|(a, t)| t * a.value(vals, j)),
            );
            tree_sum(buf) / order
        };
        let out: Vec<f64> = match &self.orbits {
            Some(orbits) => {
                let at_rep: Vec<f64> = (0..u.len())
                    .into_par_iter()
                    .map_init(Vec::new, |buf, j| {
                        if orbits.rep[j] == j && orbits.sign[j] != 0.0 {
                            average(j, buf)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (0..u.len())
                    .into_par_iter()
                    .map(|j| orbits.sign[j] * at_rep[orbits.rep[j]])
                    .collect()
            }
            None => (0..u.len())
                .into_par_iter()
                .map_init(Vec::new, |buf, j| average(j, buf))
                .collect(),
        };
        Ok(Field::from_raw(u.spec(), out))
    }

    /// `max_g ‖τ(g) u(g⁻¹·) − u‖ / ‖u‖` over the diagnostic generators.
    pub fn residual(&self, u: &Field) -> Result<f64> {
        if **u.spec() != *self.spec {
            return Err(Error::GridMismatch);
        }
        residual_over(u, &self.diagnostics)
    }
}

/// Balanced binary-tree sum: `k` equal terms with `k` a power of two sum
/// exactly, which makes orbit averaging bit-idempotent.
fn tree_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => tree_sum(&v[..n / 2]) + tree_sum(&v[n / 2..]),
    }
}

fn residual_over(u: &Field, actions: &[(f64, Action)]) -> Result<f64> {
    let norm = u.dot(u).sqrt();
    if norm == 0.0 {
        return Err(Error::Domain("symmetry residual of the zero field".into()));
    }
    let vals = u.values();
    let worst = actions
        .iter()
        .map(|(t, a)| {
            let diff: Vec<f64> = (0..u.len())
                .into_par_iter()
                .map(|j| {
                    let d = t * a.value(vals, j) - vals[j];
                    d * d
                })
                .collect();
            pairwise_sum(&diff).sqrt()
        })
        .fold(0.0, f64::max);
    Ok(worst / norm)
}

fn compute_orbits(len: usize, actions: &[Action], parities: &[f64]) -> Orbits {
    let (rep, sign): (Vec<usize>, Vec<f64>) = (0..len)
        .into_par_iter()
        .map(|j| {
            let mut best = usize::MAX;
            let mut best_sign = 0.0;
            let mut conflict = false;
            for (a, &t) in actions.iter().zip(parities) {
                let Action::Exact(table) = a else { unreachable!() };
                let s = table[j];
                if s < best {
                    best = s;
                    best_sign = t;
                } else if s == best && t != best_sign {
                    conflict = true;
                }
                if s == j && t < 0.0 {
                    conflict = true;
                }
            }
            if conflict {
                (best, 0.0)
            } else {
                // u[best] = τ u[j] for the element realizing the minimum
                (best, best_sign)
            }
        })
        .unzip();
    Orbits { rep, sign }
}

/// `τ u(g⁻¹ z)` for a node-preserving `g`.
pub fn apply_group_element(u: &Field, g: &GroupElement, parity: f64) -> Result<Field> {
    check_element(u.spec(), g)?;
    let action = Action::build(u.spec(), g, false)?;
    Ok(apply_action(u, &action, parity))
}

/// `τ u(g⁻¹ z)` with multilinear interpolation where `g⁻¹ z` falls between nodes.
pub fn apply_group_element_interpolated(u: &Field, g: &GroupElement, parity: f64) -> Result<Field> {
    check_element(u.spec(), g)?;
    let action = Action::build(u.spec(), g, true)?;
    Ok(apply_action(u, &action, parity))
}

fn check_element(spec: &GridSpec, g: &GroupElement) -> Result<()> {
    if g.dim() != spec.confined_dims() {
        return Err(Error::InvalidSymmetry(format!(
            "element acts on {} axes, grid confines {}",
            g.dim(),
            spec.confined_dims()
        )));
    }
    Ok(())
}

fn apply_action(u: &Field, action: &Action, parity: f64) -> Field {
    let vals = u.values();
    let out = (0..u.len())
        .into_par_iter()
        .map(|j| parity * action.value(vals, j))
        .collect();
    Field::from_raw(u.spec(), out)
}

pub fn symmetrize(u: &Field, c: &SymmetryConstraint) -> Result<Field> {
    SymmetryGroup::new(u.spec(), c)?.symmetrize(u)
}

pub fn symmetry_residual(u: &Field, c: &SymmetryConstraint) -> Result<f64> {
    SymmetryGroup::new(u.spec(), c)?.residual(u)
}

/// Reflections across the hyperplanes containing the rays at
/// `θ_i = (i/ℓ + 1/(2ℓ) + 1/2)π`, `i = 0 … ℓ−1`.
pub fn sector_axis_reflections(dim: usize, ell: usize) -> Vec<GroupElement> {
    let l = ell as f64;
    (0..ell)
        .map(|i| GroupElement::planar_reflection(dim, (i as f64 / l + 0.5 / l + 0.5) * PI))
        .collect()
}

/// Largest relative residual of `u` against the `L_i` reflections (parity +1).
pub fn sector_axis_residual(u: &Field, ell: usize) -> Result<f64> {
    let spec = u.spec();
    let actions = sector_axis_reflections(spec.confined_dims(), ell)
        .iter()
        .map(|g| Ok((1.0, Action::build(spec, g, true)?)))
        .collect::<Result<Vec<_>>>()?;
    residual_over(u, &actions)
}

/// Whether the `x₁x₂` point lies in the wedge `θ ∈ [π/2, π/2 + π/ℓ)`; the
/// origin belongs to it.
pub fn in_sector(x1: f64, x2: f64, ell: usize) -> bool {
    if x1 == 0.0 && x2 == 0.0 {
        return true;
    }
    const EPS: f64 = 1e-12;
    let mut psi = (x2.atan2(x1) - FRAC_PI_2).rem_euclid(TAU);
    if psi > TAU - EPS {
        psi = 0.0;
    }
    psi < PI / ell as f64 - EPS
}

fn check_cyclic(spec: &GridSpec, ell: usize) -> Result<()> {
    SymmetryConstraint::CyclicOdd(ell).validate(spec)?;
    let g = GroupElement::planar_rotation(spec.confined_dims(), TAU / ell as f64);
    if !g.is_grid_exact(spec) {
        return Err(Error::NotGridExact(format!("rotation of order {ell} on this grid")));
    }
    Ok(())
}

/// `χ_D u`.
pub fn fold_sector(u: &Field, ell: usize) -> Result<Field> {
    let spec = u.spec();
    check_cyclic(spec, ell)?;
    let mask = sector_mask(spec, ell);
    Ok(Field::from_raw(
        spec,
        u.values()
            .iter()
            .zip(&mask)
            .map(|(&v, &inside)| if inside { v } else { 0.0 })
            .collect(),
    ))
}

fn sector_mask(spec: &Arc<GridSpec>, ell: usize) -> Vec<bool> {
    let nd = spec.total_dims();
    (0..spec.len())
        .into_par_iter()
        .map_init(
            || vec![0.0; nd],
            |z, j| {
                spec.coordinates(j, z);
                in_sector(z[0], z[1], ell)
            },
        )
        .collect()
}

/// `S(v)(z) = Σ_i v(g^i z) − Σ_i v(g^i R z)` for `v` supported in the sector.
pub fn unfold_sector(v: &Field, ell: usize) -> Result<Field> {
    let spec = v.spec();
    check_cyclic(spec, ell)?;
    let mask = sector_mask(spec, ell);
    if let Some(j) = (0..v.len()).find(|&j| !mask[j] && v.values()[j] != 0.0) {
        return Err(Error::InvalidSymmetry(format!(
            "unfold input is nonzero outside the sector at node {j}"
        )));
    }
    let m = spec.confined_dims();
    let g = GroupElement::planar_rotation(m, TAU / ell as f64);
    let r = GroupElement::reflection(m, 0);
    // v(h z) is the pull-back by h⁻¹
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for i in 0..ell {
        let gi = g.power(i);
        plus.push(Action::build(spec, &gi.inverse(), false)?);
        minus.push(Action::build(spec, &gi.compose(&r).inverse(), false)?);
    }
    let vals = v.values();
    let out = (0..v.len())
        .into_par_iter()
        .map(|j| {
            plus.iter().map(|a| a.value(vals, j)).sum::<f64>() - minus.iter().map(|a| a.value(vals, j)).sum::<f64>()
        })
        .collect();
    Ok(Field::from_raw(spec, out))
}

/// `I_ℓ(v) = ℓ ∫(|∇v|² + V v²) − 2ℓ ∫F(v)` for `v` vanishing on the sector rays.
pub fn sector_energy(functional: &Functional, v: &Field, ell: usize) -> Result<f64> {
    let e = functional.energy(v)?;
    let l = ell as f64;
    Ok(l * e.h_norm_sq - 2.0 * l * e.nonlinear_part)
}
