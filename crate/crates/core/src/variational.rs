//! The energy functional `I(u) = ½‖u‖² − ∫F(u)` and its Nehari machinery.
//!
//! `‖u‖² = ∫|∇u|² + V u²` is the norm of the weighted Sobolev space; the
//! Sobolev gradient is the Riesz representative of `I'(u)` in that inner
//! product, obtained by one solve with `-Δ_h + V`.
//!
//! For a sum of powers every quantity along a ray `t ↦ t u` is a polynomial-like
//! function of `t` whose coefficients are the moments `∫|u|^{p_j}`, so the
//! Nehari scale and the fibering maximum are scalar problems once those moments
//! are known.

use crate::error::{Error, Result};
use crate::grid::{dirichlet_energy, integrate, sum_blocks, Field};
use crate::linalg::{conjugate_gradient, default_max_iter, SchrodingerOperator};
use crate::model::NonlinearityModel;

/// Fibering search domain for `t`.
pub const FIBER_T_MIN: f64 = 1e-6;
pub const FIBER_T_MAX: f64 = 1e6;
/// Nehari root tolerance relative to `‖u‖²`.
pub const NEHARI_TOL: f64 = 1e-10;

/// Which functional is being minimized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Branch {
    /// `I(u)` with `F(u)`.
    #[default]
    Full,
    /// `I₊(u)` with `F(u⁺)`; its critical points are nonnegative solutions.
    PositivePart,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub h_norm_sq: f64,
    pub potential_part: f64,
    pub kinetic_part: f64,
    pub nonlinear_part: f64,
    pub total: f64,
}

/// Energy functional bound to a nonlinearity and a sampled potential.
#[derive(Clone, Debug)]
pub struct Functional {
    model: NonlinearityModel,
    potential: Field,
    branch: Branch,
}

impl Functional {
    pub fn new(model: NonlinearityModel, potential: Field) -> Self {
        Self {
            model,
            potential,
            branch: Branch::Full,
        }
    }

    pub fn with_branch(mut self, branch: Branch) -> Self {
        self.branch = branch;
        self
    }

    pub fn model(&self) -> &NonlinearityModel {
        &self.model
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    pub fn branch(&self) -> Branch {
        self.branch
    }

    pub fn operator(&self) -> SchrodingerOperator<'_> {
        SchrodingerOperator::new(&self.potential)
    }

    #[inline]
    fn arg(&self, s: f64) -> f64 {
        match self.branch {
            Branch::Full => s,
            Branch::PositivePart => s.max(0.0),
        }
    }

    fn check(&self, u: &Field) -> Result<()> {
        u.check_grid(&self.potential)
    }

    fn weighted_square(&self, u: &Field) -> f64 {
        let (uv, vv) = (u.values(), self.potential.values());
        sum_blocks(u.len(), |r| r.map(|i| vv[i] * uv[i] * uv[i]).sum()) * u.spec().cell_volume()
    }

    /// `Q(u) = ∫|∇u|² + V u²`.
    pub fn h_norm_sq(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        Ok(dirichlet_energy(u) + self.weighted_square(u))
    }

    /// `(u, v) = ¼ [Q(u+v) − Q(u−v)]`.
    pub fn h_inner_product(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let plus = u.add_scaled(1.0, v);
        let minus = u.add_scaled(-1.0, v);
        Ok(0.25 * (self.h_norm_sq(&plus)? - self.h_norm_sq(&minus)?))
    }

    pub fn energy(&self, u: &Field) -> Result<EnergyBreakdown> {
        self.check(u)?;
        let kinetic_part = dirichlet_energy(u);
        if !kinetic_part.is_finite() {
            return Err(Error::NumericalOverflow("kinetic_part"));
        }
        let potential_part = self.weighted_square(u);
        if !potential_part.is_finite() {
            return Err(Error::NumericalOverflow("potential_part"));
        }
        let vals = u.values();
        let nonlinear_part = sum_blocks(u.len(), |r| {
            r.map(|i| self.model.antiderivative(self.arg(vals[i]))).sum()
        }) * u.spec().cell_volume();
        if !nonlinear_part.is_finite() {
            return Err(Error::NumericalOverflow("nonlinear_part"));
        }
        let h_norm_sq = kinetic_part + potential_part;
        Ok(EnergyBreakdown {
            h_norm_sq,
            potential_part,
            kinetic_part,
            nonlinear_part,
            total: 0.5 * h_norm_sq - nonlinear_part,
        })
    }

    /// `r = -Δ_h u + V u − f(u)`, the L² representative of `I'(u)`.
    pub fn first_variation(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let mut r = self.operator().apply(u);
        let vals = u.values();
        for (ri, &ui) in r.values_mut().iter_mut().zip(vals) {
            *ri -= self.model.f(self.arg(ui));
        }
        Ok(r)
    }

    /// Solves `(-Δ_h + V) g = r` for the Sobolev gradient `g`, with `r` the
    /// first variation. Returns `(g, r)`.
    pub fn sobolev_gradient_with_residual(&self, u: &Field, lin_tol: f64) -> Result<(Field, Field)> {
        if !(lin_tol > 0.0) {
            return Err(Error::InvalidConfig(format!("lin_tol = {lin_tol} must be positive")));
        }
        let r = self.first_variation(u)?;
        let mut g = vec![0.0; u.len()];
        conjugate_gradient(
            &self.operator(),
            r.values(),
            &mut g,
            lin_tol,
            default_max_iter(u.spec()),
        )?;
        Ok((Field::from_raw(u.spec(), g), r))
    }

    pub fn sobolev_gradient(&self, u: &Field, lin_tol: f64) -> Result<Field> {
        self.sobolev_gradient_with_residual(u, lin_tol).map(|(g, _)| g)
    }

    /// `⟨I'(u), u⟩ = ‖u‖² − ∫ f(u) u`.
    pub fn nehari_residual(&self, u: &Field) -> Result<f64> {
        let q = self.h_norm_sq(u)?;
        let vals = u.values();
        let fu = sum_blocks(u.len(), |r| r.map(|i| self.model.f(self.arg(vals[i])) * vals[i]).sum())
            * u.spec().cell_volume();
        Ok(q - fu)
    }

    /// Scalar fibering data for the ray through `u`.
    pub fn fiber(&self, u: &Field) -> Result<Fiber> {
        let q = self.h_norm_sq(u)?;
        if u.is_zero() {
            return Err(Error::Domain("the zero field has no Nehari scale".into()));
        }
        let vals = u.values();
        let cell = u.spec().cell_volume();
        let terms: Vec<FiberTerm> = self
            .model
            .terms()
            .iter()
            .map(|t| FiberTerm {
                coefficient: t.coefficient,
                exponent: t.exponent,
                moment: sum_blocks(u.len(), |r| r.map(|i| self.arg(vals[i]).abs().powf(t.exponent)).sum()) * cell,
            })
            .collect();
        if terms.iter().all(|t| t.moment == 0.0) {
            return Err(Error::Domain("∫f(tu)u vanishes for every t (no positive part)".into()));
        }
        if !q.is_finite() || terms.iter().any(|t| !t.moment.is_finite()) {
            return Err(Error::NumericalOverflow("fibering moments"));
        }
        Ok(Fiber { q, terms })
    }

    /// The unique `t > 0` with `t u` on the Nehari set.
    pub fn nehari_scale(&self, u: &Field) -> Result<f64> {
        let fiber = self.fiber(u)?;
        match fiber.closed_form() {
            Some(t) => Ok(t),
            None => fiber.nehari_root(),
        }
    }

    /// Nehari scale through the bracketed Newton iteration even for a pure power.
    pub fn nehari_scale_bracketed(&self, u: &Field) -> Result<f64> {
        self.fiber(u)?.nehari_root()
    }

    /// Maximizer and maximum of `t ↦ I(t u)` on `t > 0`.
    pub fn fibering_max(&self, u: &Field) -> Result<(f64, f64)> {
        self.fiber(u)?.maximize()
    }

    /// Scales `u` onto the Nehari set, returning the projected field and `t*`.
    pub fn project(&self, u: &Field) -> Result<(Field, f64)> {
        let t = self.nehari_scale(u)?;
        Ok((u.scaled(t), t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiberTerm {
    pub coefficient: f64,
    pub exponent: f64,
    /// `∫|u|^p` (or of `u⁺` on the positive branch).
    pub moment: f64,
}

/// `t ↦ I(t u)` reduced to `½ t² Q − Σ a_j/p_j t^{p_j} M_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fiber {
    pub q: f64,
    pub terms: Vec<FiberTerm>,
}

impl Fiber {
    pub fn energy(&self, t: f64) -> f64 {
        0.5 * t * t * self.q
            - self
                .terms
                .iter()
                .map(|c| c.coefficient / c.exponent * t.powf(c.exponent) * c.moment)
                .sum::<f64>()
    }

    /// `⟨I'(tu), tu⟩`.
    pub fn nehari_residual(&self, t: f64) -> f64 {
        t * t * self.reduced(t)
    }

    /// `‖u‖² − ∫ f(tu) tu / t²`, strictly decreasing in `t`.
    fn reduced(&self, t: f64) -> f64 {
        self.q
            - self
                .terms
                .iter()
                .map(|c| c.coefficient * t.powf(c.exponent - 2.0) * c.moment)
                .sum::<f64>()
    }

    fn reduced_derivative(&self, t: f64) -> f64 {
        -self
            .terms
            .iter()
            .map(|c| c.coefficient * (c.exponent - 2.0) * t.powf(c.exponent - 3.0) * c.moment)
            .sum::<f64>()
    }

    /// `t* = (Q / (a M))^{1/(p-2)}` for a single power.
    pub fn closed_form(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [c] => Some((self.q / (c.coefficient * c.moment)).powf(1.0 / (c.exponent - 2.0))),
            _ => None,
        }
    }

    pub fn nehari_root(&self) -> Result<f64> {
        let tol = NEHARI_TOL * self.q;
        let (mut lo, mut hi) = (1.0, 1.0);
        while self.reduced(hi) > 0.0 {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Domain("no Nehari root below 1e300".into()));
            }
        }
        while self.reduced(lo) < 0.0 {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(Error::Domain("no Nehari root above 1e-300".into()));
            }
        }
        let mut t = (lo * hi).sqrt();
        for _ in 0..500 {
            let phi = self.reduced(t);
            if phi.abs() <= tol {
                return Ok(t);
            }
            if phi > 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - phi / self.reduced_derivative(t);
            t = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                return Ok(t);
            }
        }
        Err(Error::Domain("Nehari root iteration did not converge".into()))
    }

    /// Golden-section search in `ln t` around the best node of a log grid
    /// spanning `[FIBER_T_MIN, FIBER_T_MAX]`.
    pub fn maximize(&self) -> Result<(f64, f64)> {
        const NODES: usize = 241;
        let (a, b) = (FIBER_T_MIN.ln(), FIBER_T_MAX.ln());
        let s_at = |k: usize| a + (b - a) * k as f64 / (NODES - 1) as f64;
        let value = |s: f64| {
            let e = self.energy(s.exp());
            if e.is_finite() {
                e
            } else {
                f64::NEG_INFINITY
            }
        };
        let best = (0..NODES)
            .max_by(|&i, &j| value(s_at(i)).total_cmp(&value(s_at(j))))
            .unwrap_or(0);
        let (mut lo, mut hi) = (s_at(best.saturating_sub(1)), s_at((best + 1).min(NODES - 1)));
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - ratio * (hi - lo);
        let mut x2 = lo + ratio * (hi - lo);
        let (mut f1, mut f2) = (value(x1), value(x2));
        while hi - lo > 1e-13 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + ratio * (hi - lo);
                f2 = value(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - ratio * (hi - lo);
                f1 = value(x1);
            }
        }
        let t = (0.5 * (lo + hi)).exp();
        let e = self.energy(t);
        if !e.is_finite() {
            return Err(Error::NumericalOverflow("fibering maximum"));
        }
        Ok((t, e))
    }
}

/// `integrate(u * v)` after checking the grids agree.
pub fn l2_pairing(u: &Field, v: &Field) -> Result<f64> {
    u.check_grid(v)?;
    Ok(integrate(&u.zip_map(v, |a, b| a * b)))
}
