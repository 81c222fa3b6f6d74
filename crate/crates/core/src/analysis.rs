//! Structural diagnostics: nodal domains, radial profiles, decay, and the
//! two-translate dipole.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{integrate, pairwise_sum, Field, GridSpec};
use crate::symmetry::SymmetryGroup;
use crate::variational::Functional;

/// Default nodal threshold relative to `max|u|`.
pub const NODAL_THRESHOLD: f64 = 1e-6;
pub const NODAL_SENSITIVITY: [f64; 3] = [1e-4, 1e-6, 1e-8];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodalReport {
    pub positive_domains: usize,
    pub negative_domains: usize,
    pub threshold: f64,
    pub total: usize,
}

/// Face-connected components of `{u > τ}` and `{u < −τ}`.
pub fn count_nodal_domains(u: &Field, threshold: f64) -> Result<NodalReport> {
    if !(threshold >= 0.0) {
        return Err(Error::Domain(format!("nodal threshold {threshold} must be >= 0")));
    }
    let spec = u.spec();
    let vals = u.values();
    let label = |v: f64| -> i8 {
        if v > threshold {
            1
        } else if v < -threshold {
            -1
        } else {
            0
        }
    };
    let mut seen = vec![false; u.len()];
    let mut queue = VecDeque::new();
    let mut idx = vec![0usize; spec.total_dims()];
    let (mut pos, mut neg) = (0, 0);
    for start in 0..u.len() {
        let sign = label(vals[start]);
        if sign == 0 || seen[start] {
            continue;
        }
        if sign > 0 {
            pos += 1;
        } else {
            neg += 1;
        }
        seen[start] = true;
        queue.push_back(start);
        while let Some(j) = queue.pop_front() {
            spec.multi_index(j, &mut idx);
            for a in 0..spec.total_dims() {
                let stride = spec.stride(a);
                let mut visit = |k: usize| {
                    if !seen[k] && label(vals[k]) == sign {
                        seen[k] = true;
                        queue.push_back(k);
                    }
                };
                if idx[a] > 0 {
                    visit(j - stride);
                }
                if idx[a] + 1 < spec.points(a) {
                    visit(j + stride);
                }
            }
        }
    }
    Ok(NodalReport {
        positive_domains: pos,
        negative_domains: neg,
        threshold,
        total: pos + neg,
    })
}

/// Counts at each relative threshold in `relative` (times `max|u|`).
pub fn nodal_sensitivity(u: &Field, relative: &[f64]) -> Result<Vec<NodalReport>> {
    let scale = u.max_abs();
    relative.iter().map(|r| count_nodal_domains(u, r * scale)).collect()
}

/// `∫ y u² / ∫ u²` over the free coordinates.
pub fn center_of_mass(u: &Field) -> Result<Vec<f64>> {
    let spec = u.spec();
    let m = spec.confined_dims();
    let mass = u.dot(u);
    if mass == 0.0 {
        return Err(Error::Domain("center of mass of the zero field".into()));
    }
    let nd = spec.total_dims();
    let vals = u.values();
    Ok((m..nd)
        .map(|axis| {
            let moments: Vec<f64> = (0..u.len())
                .into_par_iter()
                .map(|j| {
                    let i = (j / spec.stride(axis)) % spec.points(axis);
                    spec.coordinate(axis, i) * vals[j] * vals[j]
                })
                .collect();
            pairwise_sum(&moments) / mass
        })
        .collect())
}

/// Coordinate block whose radial structure is examined.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RadialBlock {
    /// `x = (x₁ … x_m)`.
    Confined,
    /// `(x₃ … x_m)`, the confined coordinates outside the rotation plane.
    ConfinedTail,
    /// `y = (x_{m+1} … x_N)`.
    Free,
    Axes(Vec<usize>),
}

impl RadialBlock {
    pub fn axes(&self, spec: &GridSpec) -> Vec<usize> {
        let m = spec.confined_dims();
        match self {
            Self::Confined => (0..m).collect(),
            Self::ConfinedTail => (2.min(m)..m).collect(),
            Self::Free => (m..spec.total_dims()).collect(),
            Self::Axes(a) => a.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadialReport {
    /// L²-aggregated deviation from the shell means, relative to `‖u‖`.
    pub residual: f64,
    /// Largest positive variation of `|profile|` along increasing radius.
    pub monotonicity_defect: f64,
    /// The center actually used, snapped to the nearest node or cell midpoint.
    pub center: Vec<f64>,
    pub warning: Option<String>,
}

/// Groups nodes of the block by exact discrete radius about `center` within
/// every slice of the complementary coordinates. In one dimension the shells
/// are mirror pairs, so the residual measures evenness about the center.
pub fn radial_symmetry_residual(u: &Field, block: &RadialBlock, center: &[f64]) -> Result<RadialReport> {
    let spec = u.spec();
    let axes = block.axes(spec);
    if axes.iter().any(|&a| a >= spec.total_dims()) {
        return Err(Error::Domain(format!("block axes {axes:?} out of range")));
    }
    if center.len() != axes.len() {
        return Err(Error::Domain(format!(
            "center has {} coordinates for a block of {} axes",
            center.len(),
            axes.len()
        )));
    }
    let norm = u.dot(u).sqrt();
    if axes.is_empty() || norm == 0.0 {
        return Ok(RadialReport {
            residual: 0.0,
            monotonicity_defect: 0.0,
            center: center.to_vec(),
            warning: Some(if axes.is_empty() {
                "empty block".into()
            } else {
                "zero field".into()
            }),
        });
    }
    let uniform = axes.iter().all(|&a| spec.axes_match(a, axes[0]));
    let warning =
        (!uniform).then(|| "block axes differ in spacing; shells of exactly equal radius are sparse".to_string());
    // doubled center index: 2c = 2(x + L)/h − 2
    let twice_center: Vec<i64> = axes
        .iter()
        .zip(center)
        .map(|(&a, &x)| (2.0 * (x + spec.half_width(a)) / spec.spacing(a) - 2.0).round() as i64)
        .collect();
    let snapped: Vec<f64> = axes
        .iter()
        .zip(&twice_center)
        .map(|(&a, &c)| -spec.half_width(a) + (c as f64 / 2.0 + 1.0) * spec.spacing(a))
        .collect();
    let vals = u.values();
    let mut slices: HashMap<usize, BTreeMap<(i64, u64), Vec<usize>>> = HashMap::new();
    let mut idx = vec![0usize; spec.total_dims()];
    for j in 0..u.len() {
        spec.multi_index(j, &mut idx);
        let mut slice_key = j;
        let mut radius_sq = 0.0f64;
        let mut key = 0i64;
        for (b, &a) in axes.iter().enumerate() {
            slice_key -= idx[a] * spec.stride(a);
            let d = 2 * idx[a] as i64 - twice_center[b];
            if uniform {
                key += d * d;
            } else {
                let x = d as f64 * 0.5 * spec.spacing(a);
                radius_sq += x * x;
            }
        }
        let shell = if uniform { (key, 0) } else { (0, radius_sq.to_bits()) };
        slices.entry(slice_key).or_default().entry(shell).or_default().push(j);
    }
    let mut keys: Vec<usize> = slices.keys().copied().collect();
    keys.sort_unstable();
    let mut deviations = Vec::with_capacity(u.len());
    let mut defect = 0.0f64;
    for key in keys {
        let mut profile = Vec::new();
        for members in slices[&key].values() {
            let mean = members.iter().map(|&j| vals[j]).sum::<f64>() / members.len() as f64;
            deviations.extend(members.iter().map(|&j| (vals[j] - mean).powi(2)));
            profile.push(mean.abs());
        }
        let rise: f64 = profile.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
        defect = defect.max(rise);
    }
    Ok(RadialReport {
        residual: pairwise_sum(&deviations).sqrt() / norm,
        monotonicity_defect: defect,
        center: snapped,
        warning,
    })
}

/// `max|u|` on the outermost interior shell over `max|u|`.
pub fn decay_metric(u: &Field) -> f64 {
    let peak = u.max_abs();
    if peak == 0.0 {
        return 0.0;
    }
    let spec = u.spec();
    let vals = u.values();
    let nd = spec.total_dims();
    let shell = (0..u.len())
        .into_par_iter()
        .map_init(
            || vec![0usize; nd],
            |idx, j| {
                spec.multi_index(j, idx);
                let outer = (0..nd).any(|a| idx[a] == 0 || idx[a] + 1 == spec.points(a));
                if outer {
                    vals[j].abs()
                } else {
                    0.0
                }
            },
        )
        .reduce(|| 0.0, f64::max);
    shell / peak
}

/// `ũ(x, y₁, y') = u(x, y₁ + k, y') − u(x, y₁ − k, y')` with `k` a physical
/// length that must be a whole number of spacings along `y₁`.
pub fn dipole_construct(u: &Field, separation: f64) -> Result<Field> {
    let spec = u.spec();
    let axis = spec.confined_dims();
    if axis >= spec.total_dims() {
        return Err(Error::Domain("the dipole needs a free direction".into()));
    }
    let shift = dipole_shift(spec, separation)?;
    let stride = spec.stride(axis);
    let n = spec.points(axis) as i64;
    let vals = u.values();
    let out = (0..u.len())
        .into_par_iter()
        .map(|j| {
            let i = ((j / stride) % spec.points(axis)) as i64;
            let at = |t: i64| {
                let k = i + t;
                if (0..n).contains(&k) {
                    vals[(j as i64 + t * stride as i64) as usize]
                } else {
                    0.0
                }
            };
            at(shift) - at(-shift)
        })
        .collect();
    Ok(Field::from_raw(spec, out))
}

fn dipole_shift(spec: &GridSpec, separation: f64) -> Result<i64> {
    let axis = spec.confined_dims();
    let h = spec.spacing(axis);
    let l = spec.half_width(axis);
    if !(separation >= 0.0) || separation >= l {
        return Err(Error::Domain(format!(
            "separation {separation} must lie in [0, L_y1 = {l})"
        )));
    }
    let steps = separation / h;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(Error::Domain(format!(
            "separation {separation} is not a multiple of the y1 spacing {h}"
        )));
    }
    Ok(steps.round() as i64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleResult {
    pub separation: f64,
    pub energy: f64,
    pub two_c: f64,
    pub gap: f64,
    pub overlap: f64,
}

/// For each separation, builds `ũ`, rescales its positive and negative parts
/// separately onto the sign-changing Nehari set, and compares `I(ũ)` with
/// `2 I(u)`.
pub fn dipole_study(functional: &Functional, u: &Field, separations: &[f64]) -> Result<Vec<DipoleResult>> {
    let two_c = 2.0 * functional.energy(u)?.total;
    let spec = u.spec();
    separations
        .iter()
        .map(|&k| {
            let w = dipole_construct(u, k)?;
            let shift = dipole_shift(spec, k)?;
            let overlap = translate_overlap(u, shift);
            let (plus, minus) = (w.positive_part(), w.negative_part().scaled(-1.0));
            let (s, t) = sign_changing_scales(functional, &plus, &minus)?;
            let projected = plus.scaled(s).add_scaled(t, &minus);
            let energy = functional.energy(&projected)?.total;
            Ok(DipoleResult {
                separation: k,
                energy,
                two_c,
                gap: energy - two_c,
                overlap,
            })
        })
        .collect()
}

/// `∫ |u(y₁ + k) u(y₁ − k)|`.
fn translate_overlap(u: &Field, shift: i64) -> f64 {
    let spec = u.spec();
    let axis = spec.confined_dims();
    let stride = spec.stride(axis);
    let n = spec.points(axis) as i64;
    let vals = u.values();
    let prod: Vec<f64> = (0..u.len())
        .into_par_iter()
        .map(|j| {
            let i = ((j / stride) % spec.points(axis)) as i64;
            if (0..n).contains(&(i + shift)) && (0..n).contains(&(i - shift)) {
                let a = vals[(j as i64 + shift * stride as i64) as usize];
                let b = vals[(j as i64 - shift * stride as i64) as usize];
                (a * b).abs()
            } else {
                0.0
            }
        })
        .collect();
    pairwise_sum(&prod) * spec.cell_volume()
}

/// Solves `⟨I'(s a + t b), s a⟩ = ⟨I'(s a + t b), t b⟩ = 0` for disjointly
/// supported `a ≥ 0`, `b ≤ 0` by Newton from the independent Nehari scales.
fn sign_changing_scales(functional: &Functional, a: &Field, b: &Field) -> Result<(f64, f64)> {
    if a.is_zero() || b.is_zero() {
        return Err(Error::Domain("dipole has no sign change to project".into()));
    }
    let qa = functional.h_norm_sq(a)?;
    let qb = functional.h_norm_sq(b)?;
    // cross term from the operator directly: exactly zero for separated supports
    let ab = crate::variational::l2_pairing(a, &functional.operator().apply(b))?;
    let fa = functional.fiber(a)?;
    let fb = functional.fiber(b)?;
    let g = |c: &crate::variational::Fiber, s: f64| -> (f64, f64) {
        c.terms.iter().fold((0.0, 0.0), |(v, d), t| {
            (
                v + t.coefficient * s.powf(t.exponent - 1.0) * t.moment,
                d + t.coefficient * (t.exponent - 1.0) * s.powf(t.exponent - 2.0) * t.moment,
            )
        })
    };
    let residual = |s: f64, t: f64| {
        let (ga, _) = g(&fa, s);
        let (gb, _) = g(&fb, t);
        (s * qa + t * ab - ga, t * qb + s * ab - gb)
    };
    let mut s = functional.nehari_scale(a)?;
    let mut t = functional.nehari_scale(b)?;
    let scale = qa.max(qb);
    for _ in 0..200 {
        let (r1, r2) = residual(s, t);
        let norm = r1.hypot(r2);
        if norm <= 1e-13 * scale * (s + t) {
            return Ok((s, t));
        }
        let (_, da) = g(&fa, s);
        let (_, db) = g(&fb, t);
        let (j11, j12, j21, j22) = (qa - da, ab, ab, qb - db);
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let ds = (r1 * j22 - r2 * j12) / det;
        let dt = (j11 * r2 - j21 * r1) / det;
        let mut step = 1.0;
        loop {
            let (ns, nt) = (s - step * ds, t - step * dt);
            if ns > 0.0 && nt > 0.0 {
                let (q1, q2) = residual(ns, nt);
                if q1.hypot(q2) < norm || step < 1e-6 {
                    s = ns;
                    t = nt;
                    break;
                }
            }
            step *= 0.5;
            if step < 1e-12 {
                return Err(Error::Domain("sign-changing projection stalled".into()));
            }
        }
    }
    let (r1, r2) = residual(s, t);
    if r1.hypot(r2) <= 1e-10 * scale * (s + t) {
        Ok((s, t))
    } else {
        Err(Error::Domain("sign-changing projection did not converge".into()))
    }
}

/// Every scalar that a run reports about its final field, recomputable from the
/// field alone.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSummary {
    pub energy: f64,
    pub h_norm_sq: f64,
    pub nehari_residual: f64,
    /// `‖−Δu + Vu − f(u)‖ / ‖u‖` in L².
    pub grad_residual: f64,
    pub nodal: NodalReport,
    pub nodal_sensitivity: Vec<NodalReport>,
    pub symmetry_residual: f64,
    pub decay_metric: f64,
    pub min_interior_value: f64,
}

pub fn summarize(functional: &Functional, group: &SymmetryGroup, u: &Field) -> Result<FieldSummary> {
    let e = functional.energy(u)?;
    let r = functional.first_variation(u)?;
    let un = u.dot(u).sqrt();
    if un == 0.0 {
        return Err(Error::Domain("summary of the zero field".into()));
    }
    Ok(FieldSummary {
        energy: e.total,
        h_norm_sq: e.h_norm_sq,
        nehari_residual: functional.nehari_residual(u)?,
        grad_residual: r.dot(&r).sqrt() / un,
        nodal: count_nodal_domains(u, NODAL_THRESHOLD * u.max_abs())?,
        nodal_sensitivity: nodal_sensitivity(u, &NODAL_SENSITIVITY)?,
        symmetry_residual: group.residual(u)?,
        decay_metric: decay_metric(u),
        min_interior_value: u.min_value(),
    })
}

/// `∫ u²`, exposed for reports.
pub fn mass(u: &Field) -> f64 {
    integrate(&u.zip_map(u, |a, b| a * b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{potential_values, NonlinearityModel};
    use crate::symmetry::{apply_group_element, GroupElement};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn grid2() -> Arc<GridSpec> {
        Arc::new(GridSpec::new(2, 1, &[6.0, 8.0], &[47, 63]).unwrap())
    }

    fn gaussian(g: &Arc<GridSpec>, c: f64) -> Field {
        Field::from_fn(g, |z| (-(z[0] * z[0]) - (z[1] - c) * (z[1] - c)).exp())
    }

    #[test]
    fn nodal_examples() {
        let g = grid2();
        let u = gaussian(&g, 0.0);
        let r = count_nodal_domains(&u, 1e-6).unwrap();
        assert_eq!((r.positive_domains, r.negative_domains, r.total), (1, 0, 1));
        let v = Field::from_fn(&g, |z| z[0] * (-(z[0] * z[0] + z[1] * z[1])).exp());
        let r = count_nodal_domains(&v, 1e-6 * v.max_abs()).unwrap();
        assert_eq!((r.positive_domains, r.negative_domains), (1, 1));
        assert_eq!(count_nodal_domains(&Field::zeros(&g), 0.0).unwrap().total, 0);
        assert!(count_nodal_domains(&u, -1.0).is_err());
    }

    #[test]
    fn separated_bumps_are_distinct() {
        let g = grid2();
        // two positive bumps separated by a line of exact zeros
        let u = Field::from_fn(&g, |z| {
            (z[1].abs() - 2.0).max(0.0) * (-(z[0] * z[0])).exp() * (3.5 - z[1].abs()).max(0.0)
        });
        assert_eq!(count_nodal_domains(&u, 0.0).unwrap().positive_domains, 2);
    }

    #[test]
    fn center_of_mass_examples() {
        let g = grid2();
        let y0 = center_of_mass(&gaussian(&g, 0.0)).unwrap();
        assert!(y0[0].abs() < 1e-12);
        let h = g.spacing(1);
        let a = 8.0 * h;
        let y0 = center_of_mass(&gaussian(&g, a)).unwrap();
        assert!((y0[0] - a).abs() < h);
        let d = dipole_construct(&gaussian(&g, 0.0), 2.0).unwrap();
        assert!(center_of_mass(&d).unwrap()[0].abs() < 1e-12);
        assert!(center_of_mass(&Field::zeros(&g)).is_err());
    }

    #[test]
    fn radial_examples() {
        let g = Arc::new(GridSpec::new(3, 1, &[5.0], &[41]).unwrap());
        let u = Field::from_fn(&g, |z| (-(z[1] * z[1] + z[2] * z[2]) / 2.0).exp() * (1.0 + 0.3 * z[0]));
        let r = radial_symmetry_residual(&u, &RadialBlock::Free, &[0.0, 0.0]).unwrap();
        assert!(r.residual <= 1e-10, "{}", r.residual);
        assert!(r.monotonicity_defect <= 1e-10);
        let c = 5.0 * g.spacing(1);
        let off = Field::from_fn(&g, |z| (-((z[1] - c).powi(2) + z[2] * z[2]) / 2.0).exp());
        let r = radial_symmetry_residual(&off, &RadialBlock::Free, &[0.0, 0.0]).unwrap();
        assert!(r.residual > 0.1);
        // recentring removes the defect
        let r = radial_symmetry_residual(&off, &RadialBlock::Free, &[c, 0.0]).unwrap();
        assert!(r.residual <= 1e-10);
        // 1D block: mirror pairs
        let g1 = grid2();
        let r = radial_symmetry_residual(&gaussian(&g1, 0.0), &RadialBlock::Free, &[0.0]).unwrap();
        assert!(r.residual <= 1e-12);
        let r = radial_symmetry_residual(&gaussian(&g1, 1.0), &RadialBlock::Free, &[0.0]).unwrap();
        assert!(r.residual > 0.1);
        assert!(radial_symmetry_residual(&u, &RadialBlock::Free, &[0.0]).is_err());
    }

    #[test]
    fn decay_examples() {
        let g = grid2();
        let bump = Field::from_fn(&g, |z| (1.0 - z[0] * z[0] - z[1] * z[1]).max(0.0));
        assert_eq!(decay_metric(&bump), 0.0);
        let g8 = Arc::new(GridSpec::new(2, 1, &[8.0], &[255]).unwrap());
        let u = Field::from_fn(&g8, |z| (-(z[0] * z[0] + z[1] * z[1]) / 2.0).exp());
        let x = g8.coordinate(0, 0);
        assert!(decay_metric(&u) <= (-(x * x) / 2.0).exp() * 1.0000001);
        assert!(decay_metric(&u) <= 3e-14);
    }

    #[test]
    fn dipole_examples() {
        let g = grid2();
        let u = gaussian(&g, 0.0);
        assert!(dipole_construct(&u, 0.0).unwrap().is_zero());
        assert!(dipole_construct(&u, 8.0).is_err());
        assert!(dipole_construct(&u, 0.1).is_err());
        let h = g.spacing(1);
        let w = dipole_construct(&u, 4.0 * h).unwrap();
        // antisymmetric in y about 0
        let mirrored = apply_free_reflection(&w);
        assert_eq!(mirrored, w.scaled(-1.0));
    }

    fn apply_free_reflection(u: &Field) -> Field {
        let spec = u.spec().clone();
        let mut out = vec![0.0; u.len()];
        let mut idx = vec![0usize; 2];
        for (j, o) in out.iter_mut().enumerate() {
            spec.multi_index(j, &mut idx);
            idx[1] = spec.points(1) - 1 - idx[1];
            *o = u.values()[spec.flat_index(&idx)];
        }
        Field::from_values(&spec, out).unwrap()
    }

    #[test]
    fn dipole_identity_for_separated_support() {
        let g = Arc::new(GridSpec::new(2, 1, &[5.0, 12.0], &[39, 95]).unwrap());
        let f = Functional::new(NonlinearityModel::pure_power(4.0).unwrap(), potential_values(&g));
        let bump = Field::from_fn(&g, |z| {
            let r2 = z[0] * z[0] + z[1] * z[1];
            if r2 < 4.0 {
                (-r2).exp()
            } else {
                0.0
            }
        });
        let (u, _) = f.project(&bump).unwrap();
        let res = dipole_study(&f, &u, &[5.0]).unwrap();
        assert_eq!(res[0].overlap, 0.0);
        assert_relative_eq!(res[0].energy, res[0].two_c, max_relative = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nodal_count_invariances(a in 0.01f64..100.0, c in -2.0f64..2.0, tau in 1e-8f64..1e-2) {
            let g = grid2();
            let u = Field::from_fn(&g, |z| (z[0] + 0.1) * (z[1] - c) * (-(z[0] * z[0] + z[1] * z[1]) / 4.0).exp());
            let base = count_nodal_domains(&u, tau).unwrap();
            let scaled = count_nodal_domains(&u.scaled(a), a * tau).unwrap();
            prop_assert_eq!(
                (base.positive_domains, base.negative_domains),
                (scaled.positive_domains, scaled.negative_domains)
            );
            let r = apply_group_element(&u, &GroupElement::reflection(1, 0), -1.0).unwrap();
            let mirrored = count_nodal_domains(&r, tau).unwrap();
            prop_assert_eq!(base.total, mirrored.total);
        }
    }
}
