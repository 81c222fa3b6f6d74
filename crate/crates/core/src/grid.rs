//! Truncated Dirichlet box and the discrete calculus on it.
//!
//! A [`GridSpec`] replaces ℝ^N by the box `[-L_0, L_0] × … × [-L_{N-1}, L_{N-1}]`
//! and stores only interior nodes; the boundary is an implicit layer of zeros.
//! Node `i` on axis `a` sits at `-L_a + (i + 1) h_a` with `h_a = 2 L_a / (n_a + 1)`.
//! Values are stored row-major with axis 0 slowest.
//!
//! The Laplacian is the second-order central difference with zero ghost values,
//! and [`dirichlet_energy`] sums squared forward differences over every edge of
//! the grid including the two boundary edges of each line. With these choices
//! `dirichlet_energy(u) == -integrate(u * laplacian_apply(u))` holds up to
//! roundoff, which is what makes the Sobolev gradient an exact gradient.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};

const SUM_BLOCK: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    total_dims: usize,
    confined_dims: usize,
    half_widths: Vec<f64>,
    points: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl GridSpec {
    /// Validated grid for the partially confined problem: `N >= 2`, `1 <= m < N`,
    /// at least three interior points and a positive half-width on every axis.
    ///
    /// `half_widths` and `points_per_axis` take either one entry per axis or a
    /// single entry broadcast to all axes.
    pub fn new(
        total_dims: usize,
        confined_dims: usize,
        half_widths: &[f64],
        points_per_axis: &[usize],
    ) -> Result<Self> {
        if total_dims < 2 {
            return Err(Error::InvalidGrid(format!("N = {total_dims}, N >= 2 required")));
        }
        if confined_dims < 1 || confined_dims >= total_dims {
            return Err(Error::InvalidGrid(format!(
                "m = {confined_dims} with N = {total_dims}: 1 <= m < N required"
            )));
        }
        let half_widths = broadcast(half_widths, total_dims, "half_widths")?;
        let points = broadcast(points_per_axis, total_dims, "points_per_axis")?;
        if let Some((axis, n)) = points.iter().enumerate().find(|(_, &n)| n < 3) {
            return Err(Error::InvalidGrid(format!(
                "axis {axis} has n = {n} interior points, n >= 3 required"
            )));
        }
        Self::build(confined_dims, half_widths, points)
    }

    /// Every axis confined (`m = N`). Not a valid setting for the partially
    /// confined problem; used to validate the operator against the oscillator.
    pub fn fully_confined(half_widths: &[f64], points_per_axis: &[usize]) -> Result<Self> {
        let mut spec = Self::bare(half_widths, points_per_axis)?;
        if let Some((axis, n)) = spec.points.iter().enumerate().find(|(_, &n)| n < 3) {
            return Err(Error::InvalidGrid(format!(
                "axis {axis} has n = {n} interior points, n >= 3 required"
            )));
        }
        spec.confined_dims = spec.total_dims;
        Ok(spec)
    }

    /// Box without the physics constraints (any `N >= 1`, `n >= 1`, no confined
    /// block). Used to exercise the discrete calculus on tiny grids.
    pub fn bare(half_widths: &[f64], points_per_axis: &[usize]) -> Result<Self> {
        let dims = half_widths.len().max(points_per_axis.len());
        if dims == 0 {
            return Err(Error::InvalidGrid("at least one axis required".into()));
        }
        let half_widths = broadcast(half_widths, dims, "half_widths")?;
        let points = broadcast(points_per_axis, dims, "points_per_axis")?;
        if points.contains(&0) {
            return Err(Error::InvalidGrid("every axis needs at least one point".into()));
        }
        Self::build(0, half_widths, points)
    }

    fn build(confined_dims: usize, half_widths: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        if let Some((axis, l)) = half_widths
            .iter()
            .enumerate()
            .find(|(_, &l)| !(l.is_finite() && l > 0.0))
        {
            return Err(Error::InvalidGrid(format!("axis {axis} has L = {l}, L > 0 required")));
        }
        let total_dims = points.len();
        let spacing = half_widths
            .iter()
            .zip(&points)
            .map(|(&l, &n)| 2.0 * l / (n as f64 + 1.0))
            .collect();
        let mut strides = vec![1; total_dims];
        for a in (0..total_dims.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        let len = points.iter().product();
        Ok(Self {
            total_dims,
            confined_dims,
            half_widths,
            points,
            spacing,
            strides,
            len,
        })
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    pub fn confined_dims(&self) -> usize {
        self.confined_dims
    }

    pub fn free_dims(&self) -> usize {
        self.total_dims - self.confined_dims
    }

    pub fn half_width(&self, axis: usize) -> f64 {
        self.half_widths[axis]
    }

    pub fn half_widths(&self) -> &[f64] {
        &self.half_widths
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn points_per_axis(&self) -> &[usize] {
        &self.points
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Quadrature weight of one node, the product of the per-axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// `−L + (i+1)h`, evaluated as `(2i + 1 − n)·h/2` so that mirrored nodes
    /// carry exactly negated coordinates and the middle node of an odd axis is 0.
    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        let offset = 2 * index as i64 + 1 - self.points[axis] as i64;
        offset as f64 * (0.5 * self.spacing[axis])
    }

    /// Index of the node closest to coordinate `x` on `axis`, if inside the box.
    pub fn nearest_index(&self, axis: usize, x: f64) -> Option<usize> {
        let i = ((x + self.half_widths[axis]) / self.spacing[axis]).round() as i64 - 1;
        (0..self.points[axis] as i64).contains(&i).then_some(i as usize)
    }

    pub fn multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut rest = flat;
        for a in 0..self.total_dims {
            out[a] = rest / self.strides[a];
            rest %= self.strides[a];
        }
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coordinates(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for a in 0..self.total_dims {
            let i = rest / self.strides[a];
            rest %= self.strides[a];
            out[a] = self.coordinate(a, i);
        }
    }

    /// True when the two axes carry identical node sets (same `n` and `L`).
    pub fn axes_match(&self, a: usize, b: usize) -> bool {
        self.points[a] == self.points[b] && self.half_widths[a] == self.half_widths[b]
    }
}

fn broadcast<T: Copy>(values: &[T], dims: usize, what: &str) -> Result<Vec<T>> {
    match values.len() {
        1 => Ok(vec![values[0]; dims]),
        n if n == dims => Ok(values.to_vec()),
        n => Err(Error::InvalidGrid(format!(
            "{what} has {n} entries, expected 1 or {dims}"
        ))),
    }
}

/// Real grid function on the interior nodes of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    spec: Arc<GridSpec>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(spec: &Arc<GridSpec>) -> Self {
        Self {
            spec: Arc::clone(spec),
            values: vec![0.0; spec.len()],
        }
    }

    pub fn constant(spec: &Arc<GridSpec>, value: f64) -> Self {
        Self {
            spec: Arc::clone(spec),
            values: vec![value; spec.len()],
        }
    }

    pub fn from_values(spec: &Arc<GridSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                spec.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericalOverflow(if i == 0 {
                "field value 0"
            } else {
                "field values"
            }));
        }
        Ok(Self {
            spec: Arc::clone(spec),
            values,
        })
    }

    /// Samples `f` at every interior node; `f` receives the node coordinates.
    pub fn from_fn(spec: &Arc<GridSpec>, f: impl Fn(&[f64]) -> f64 + Sync) -> Self {
        let dims = spec.total_dims();
        let values = (0..spec.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; dims],
                |z, i| {
                    spec.coordinates(i, z);
                    f(z)
                },
            )
            .collect();
        Self {
            spec: Arc::clone(spec),
            values,
        }
    }

    pub(crate) fn from_raw(spec: &Arc<GridSpec>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        Self {
            spec: Arc::clone(spec),
            values,
        }
    }

    pub fn spec(&self) -> &Arc<GridSpec> {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.spec, &other.spec) || *self.spec == *other.spec
    }

    pub(crate) fn check_grid(&self, other: &Field) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Value at a multi-index; indices outside the interior read the zero boundary.
    pub fn get(&self, idx: &[i64]) -> f64 {
        let mut flat = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            if i < 0 || i >= self.spec.points(a) as i64 {
                return 0.0;
            }
            flat += i as usize * self.spec.stride(a);
        }
        self.values[flat]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Field {
        Field::from_raw(&self.spec, self.values.par_iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64 + Sync) -> Field {
        assert!(self.same_grid(other), "zip_map on different grids");
        Field::from_raw(
            &self.spec,
            self.values
                .par_iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn scaled(&self, a: f64) -> Field {
        self.map(|v| a * v)
    }

    /// `self + a * other`
    pub fn add_scaled(&self, a: f64, other: &Field) -> Field {
        self.zip_map(other, |u, v| u + a * v)
    }

    pub fn positive_part(&self) -> Field {
        self.map(|v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Field {
        self.map(|v| v.min(0.0))
    }

    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Unweighted Euclidean dot product with deterministic summation order.
    pub fn dot(&self, other: &Field) -> f64 {
        assert!(self.same_grid(other), "dot on different grids");
        sum_blocks(self.len(), |range| {
            range.map(|i| self.values[i] * other.values[i]).sum()
        })
    }

    /// L² inner product, `integrate(self * other)`.
    pub fn inner_l2(&self, other: &Field) -> f64 {
        self.dot(other) * self.spec.cell_volume()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner_l2(self).sqrt()
    }
}

/// Pairwise (cascade) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BASE: usize = 128;
    if values.len() <= BASE {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Sums `block(range)` over fixed-size blocks of `0..len` in parallel, then
/// combines the block totals pairwise. The order is independent of the number
/// of worker threads, so results are bit-reproducible.
pub(crate) fn sum_blocks(len: usize, block: impl Fn(std::ops::Range<usize>) -> f64 + Sync) -> f64 {
    let blocks = len.div_ceil(SUM_BLOCK);
    let partial: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|b| block(b * SUM_BLOCK..((b + 1) * SUM_BLOCK).min(len)))
        .collect();
    pairwise_sum(&partial)
}

/// Rectangle rule over the interior nodes: `h^N * Σ f`.
pub fn integrate(f: &Field) -> f64 {
    let vals = f.values();
    let partial: Vec<f64> = vals.par_chunks(SUM_BLOCK).map(pairwise_sum).collect();
    pairwise_sum(&partial) * f.spec().cell_volume()
}

/// Central-difference Laplacian with homogeneous Dirichlet ghost values.
pub fn laplacian_apply(f: &Field) -> Field {
    let mut out = vec![0.0; f.len()];
    laplacian_into(f.spec(), f.values(), &mut out);
    Field::from_raw(f.spec(), out)
}

pub(crate) fn laplacian_into(spec: &GridSpec, u: &[f64], out: &mut [f64]) {
    let dims = spec.total_dims();
    let n0 = spec.points(0);
    let slab = spec.stride(0);
    let inv0 = 1.0 / (spec.spacing(0) * spec.spacing(0));
    out.par_chunks_mut(slab).enumerate().for_each(|(i0, o)| {
        let base = i0 * slab;
        let cur = &u[base..base + slab];
        let below = (i0 > 0).then(|| &u[base - slab..base]);
        let above = (i0 + 1 < n0).then(|| &u[base + slab..base + 2 * slab]);
        for j in 0..slab {
            let mut acc = -2.0 * cur[j];
            if let Some(b) = below {
                acc += b[j];
            }
            if let Some(a) = above {
                acc += a[j];
            }
            o[j] = acc * inv0;
        }
        for a in 1..dims {
            let s = spec.stride(a);
            let na = spec.points(a);
            let inv = 1.0 / (spec.spacing(a) * spec.spacing(a));
            for blk in (0..slab).step_by(na * s) {
                for i in 0..na {
                    for j in 0..s {
                        let idx = blk + i * s + j;
                        let mut acc = -2.0 * cur[idx];
                        if i > 0 {
                            acc += cur[idx - s];
                        }
                        if i + 1 < na {
                            acc += cur[idx + s];
                        }
                        o[idx] += acc * inv;
                    }
                }
            }
        }
    });
}

/// Discrete `∫|∇f|²`: squared forward differences over every edge, boundary
/// edges against the implicit zero included.
pub fn dirichlet_energy(f: &Field) -> f64 {
    let spec = f.spec();
    let u = f.values();
    let dims = spec.total_dims();
    let n0 = spec.points(0);
    let slab = spec.stride(0);
    let inv0 = 1.0 / (spec.spacing(0) * spec.spacing(0));
    let partial: Vec<f64> = (0..n0)
        .into_par_iter()
        .map(|i0| {
            let base = i0 * slab;
            let cur = &u[base..base + slab];
            let mut axis0 = 0.0;
            for j in 0..slab {
                let prev = if i0 > 0 { u[base - slab + j] } else { 0.0 };
                let d = cur[j] - prev;
                axis0 += d * d;
                if i0 + 1 == n0 {
                    axis0 += cur[j] * cur[j];
                }
            }
            let mut total = axis0 * inv0;
            for a in 1..dims {
                let s = spec.stride(a);
                let na = spec.points(a);
                let inv = 1.0 / (spec.spacing(a) * spec.spacing(a));
                let mut acc = 0.0;
                for blk in (0..slab).step_by(na * s) {
                    for i in 0..na {
                        for j in 0..s {
                            let idx = blk + i * s + j;
                            let prev = if i > 0 { cur[idx - s] } else { 0.0 };
                            let d = cur[idx] - prev;
                            acc += d * d;
                            if i + 1 == na {
                                acc += cur[idx] * cur[idx];
                            }
                        }
                    }
                }
                total += acc * inv;
            }
            total
        })
        .collect();
    pairwise_sum(&partial) * spec.cell_volume()
}
