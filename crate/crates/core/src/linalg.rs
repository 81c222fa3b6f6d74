//! Matrix-free conjugate gradients for the operator `-Δ_h + V`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{laplacian_into, sum_blocks, Field, GridSpec};

/// The symmetric positive-definite operator `A = -Δ_h + V`.
#[derive(Clone, Copy)]
pub struct SchrodingerOperator<'a> {
    spec: &'a GridSpec,
    potential: &'a [f64],
}

impl<'a> SchrodingerOperator<'a> {
    pub fn new(potential: &'a Field) -> Self {
        Self {
            spec: potential.spec(),
            potential: potential.values(),
        }
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        laplacian_into(self.spec, u, out);
        out.par_iter_mut()
            .zip(u.par_iter().zip(self.potential.par_iter()))
            .for_each(|(o, (&x, &v))| *o = v * x - *o);
    }

    pub fn apply(&self, u: &Field) -> Field {
        let mut out = vec![0.0; u.len()];
        self.apply_into(u.values(), &mut out);
        Field::from_raw(u.spec(), out)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    sum_blocks(a.len(), |r| r.map(|i| a[i] * b[i]).sum())
}

/// Solves `A x = b` to relative residual `tol`, starting from the contents of `x`.
pub fn conjugate_gradient(
    op: &SchrodingerOperator<'_>,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    op.apply_into(x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(r, &b)| *r = b - *r);
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while rr.sqrt() > tol * b_norm {
        if iterations == max_iter {
            return Err(Error::LinearSolve {
                iterations,
                residual: rr.sqrt() / b_norm,
            });
        }
        op.apply_into(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(x, &p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, &ap)| *r -= alpha * ap);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.par_iter_mut().zip(&r).for_each(|(p, &r)| *p = r + beta * *p);
        iterations += 1;
    }
    Ok(CgOutcome {
        iterations,
        relative_residual: rr.sqrt() / b_norm,
    })
}

/// Iteration cap scaled to the grid: a generous multiple of the longest axis.
pub fn default_max_iter(spec: &GridSpec) -> usize {
    let longest = spec.points_per_axis().iter().copied().max().unwrap_or(1);
    (40 * longest).max(500)
}
