//! Confinement potential and the sum-of-powers nonlinearity.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};

/// `V(z) = x_1² + … + x_m²` sampled on the grid.
pub fn potential_values(spec: &Arc<GridSpec>) -> Field {
    let m = spec.confined_dims();
    Field::from_fn(spec, |z| z[..m].iter().map(|x| x * x).sum())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerTerm {
    pub coefficient: f64,
    pub exponent: f64,
}

/// `f(s) = Σ a_j |s|^{p_j-2} s` with every `a_j > 0` and `p_j > 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct NonlinearityModel {
    terms: Vec<PowerTerm>,
}

impl NonlinearityModel {
    pub fn new(terms: Vec<PowerTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidModel("at least one term required".into()));
        }
        for t in &terms {
            if !(t.coefficient.is_finite() && t.coefficient > 0.0) {
                return Err(Error::InvalidModel(format!(
                    "coefficient {} must be positive",
                    t.coefficient
                )));
            }
            if !(t.exponent.is_finite() && t.exponent > 2.0) {
                return Err(Error::InvalidModel(format!("exponent {} must exceed 2", t.exponent)));
            }
        }
        Ok(Self { terms })
    }

    /// `f(s) = |s|^{p-2} s`.
    pub fn pure_power(exponent: f64) -> Result<Self> {
        Self::new(vec![PowerTerm {
            coefficient: 1.0,
            exponent,
        }])
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }

    /// Exponent of a single unit-free power, if the model is one.
    pub fn single_exponent(&self) -> Option<f64> {
        match self.terms.as_slice() {
            [t] => Some(t.exponent),
            _ => None,
        }
    }

    /// γ, the smallest exponent.
    pub fn gamma(&self) -> f64 {
        self.terms.iter().map(|t| t.exponent).fold(f64::INFINITY, f64::min)
    }

    pub fn max_exponent(&self) -> f64 {
        self.terms.iter().map(|t| t.exponent).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(σ₁, σ₂) = (p_min - 2, p_max - 2)`.
    pub fn sigma_bounds(&self) -> (f64, f64) {
        (self.gamma() - 2.0, self.max_exponent() - 2.0)
    }

    #[inline]
    pub fn f(&self, s: f64) -> f64 {
        let a = s.abs();
        self.terms
            .iter()
            .map(|t| t.coefficient * pow(a, t.exponent - 2.0) * s)
            .sum()
    }

    #[inline]
    pub fn antiderivative(&self, s: f64) -> f64 {
        let a = s.abs();
        self.terms
            .iter()
            .map(|t| t.coefficient / t.exponent * pow(a, t.exponent))
            .sum()
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        let a = s.abs();
        self.terms
            .iter()
            .map(|t| t.coefficient * (t.exponent - 1.0) * pow(a, t.exponent - 2.0))
            .sum()
    }

    pub fn check_hypotheses(&self, n_dims: usize) -> HypothesisReport {
        HypothesisReport::evaluate(self, n_dims)
    }
}

#[inline]
fn pow(a: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < 64.0 {
        a.powi(e as i32)
    } else {
        a.powf(e)
    }
}

/// Critical Sobolev exponent `2N/(N-2)`; `None` (no bound) for `N <= 2`.
pub fn critical_exponent(n_dims: usize) -> Option<f64> {
    (n_dims > 2).then(|| 2.0 * n_dims as f64 / (n_dims as f64 - 2.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of checking (f1)–(f4) and the derivative growth bound on a model.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    pub gamma: f64,
    pub critical_exponent: Option<f64>,
    /// `(σ₁, σ₂, C)` with `f'(s) <= C (s^σ₁ + s^σ₂)` for `s >= 0`.
    pub growth_witness: (f64, f64, f64),
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    fn evaluate(model: &NonlinearityModel, n_dims: usize) -> Self {
        let gamma = model.gamma();
        let crit = critical_exponent(n_dims);
        let mut checks = Vec::new();

        let small = model.terms.iter().all(|t| t.exponent > 2.0);
        checks.push(HypothesisCheck {
            name: "f1",
            passed: small,
            detail: "every exponent > 2 gives f(s) = o(|s|) at 0".into(),
        });

        let sub = match crit {
            Some(c) => model.terms.iter().find(|t| t.exponent >= c).map_or(
                HypothesisCheck {
                    name: "f2",
                    passed: true,
                    detail: format!("all exponents below 2* = {c}"),
                },
                |t| HypothesisCheck {
                    name: "f2",
                    passed: false,
                    detail: format!("exponent {} >= 2* = {c}", t.exponent),
                },
            ),
            None => HypothesisCheck {
                name: "f2",
                passed: true,
                detail: "N = 2: no upper exponent bound enforced".into(),
            },
        };
        checks.push(sub);

        // f(s)s - γF(s) = Σ a_j (1 - γ/p_j) |s|^{p_j} >= 0 because p_j >= γ.
        let ar = gamma > 2.0 && model.terms.iter().all(|t| t.exponent >= gamma);
        checks.push(HypothesisCheck {
            name: "f3",
            passed: ar,
            detail: format!("γ = {gamma}: f(s)s - γF(s) = Σ a_j (1 - γ/p_j)|s|^p_j >= 0"),
        });

        // f(s)/|s| = sign(s) Σ a_j |s|^{p_j-2} is strictly increasing on each half-line.
        checks.push(HypothesisCheck {
            name: "f4",
            passed: small,
            detail: "f(s)/|s| strictly monotone since every p_j - 2 > 0".into(),
        });

        let (s1, s2) = model.sigma_bounds();
        let c: f64 = model.terms.iter().map(|t| t.coefficient * (t.exponent - 1.0)).sum();
        checks.push(HypothesisCheck {
            name: "f'-growth",
            passed: s1 > 0.0 && s2 > 0.0,
            detail: format!("f'(s) <= {c} (s^{s1} + s^{s2})"),
        });

        Self {
            gamma,
            critical_exponent: crit,
            growth_witness: (s1, s2, c),
            checks,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// `Err` naming the first violated hypothesis.
    pub fn into_result(self) -> Result<Self> {
        match self.first_failure() {
            Some(c) => Err(Error::Hypothesis {
                name: c.name,
                detail: c.detail.clone(),
            }),
            None => Ok(self),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_term() -> NonlinearityModel {
        NonlinearityModel::new(vec![
            PowerTerm {
                coefficient: 1.0,
                exponent: 3.0,
            },
            PowerTerm {
                coefficient: 1.0,
                exponent: 4.0,
            },
        ])
        .unwrap()
    }

    #[test]
    fn potential_examples() {
        let g = Arc::new(GridSpec::new(2, 1, &[2.0], &[7]).unwrap());
        let v = potential_values(&g);
        // x1 = 1.5 at index 6 (h = 0.5)
        assert_eq!(g.coordinate(0, 6), 1.5);
        assert_eq!(v.values()[g.flat_index(&[6, 0])], 2.25);
        assert_eq!(v.values()[g.flat_index(&[3, 6])], 0.0);

        let g = Arc::new(GridSpec::new(3, 2, &[4.0], &[7]).unwrap());
        let v = potential_values(&g);
        // h = 1, coordinate = i - 3
        for k in 0..7 {
            assert_eq!(v.values()[g.flat_index(&[4, 5, k])], 5.0);
        }
        assert!(v.values().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn closed_form_values() {
        let m = NonlinearityModel::pure_power(4.0).unwrap();
        assert_eq!(m.f(2.0), 8.0);
        assert_eq!(m.antiderivative(2.0), 4.0);
        assert_eq!(m.derivative(2.0), 12.0);
        assert_eq!(m.f(0.0), 0.0);
        assert_eq!(m.antiderivative(0.0), 0.0);

        let m = two_term();
        assert_eq!(m.f(1.0), 2.0);
        assert_relative_eq!(m.antiderivative(1.0), 1.0 / 3.0 + 0.25);
        assert_eq!(m.f(0.0), 0.0);
    }

    #[test]
    fn invalid_models() {
        assert!(NonlinearityModel::new(vec![]).is_err());
        assert!(NonlinearityModel::pure_power(2.0).is_err());
        assert!(NonlinearityModel::new(vec![PowerTerm {
            coefficient: -1.0,
            exponent: 4.0
        }])
        .is_err());
    }

    #[test]
    fn hypothesis_examples() {
        let r = NonlinearityModel::pure_power(4.0).unwrap().check_hypotheses(3);
        assert!(r.all_passed());
        assert_eq!(r.gamma, 4.0);
        assert_eq!(r.critical_exponent, Some(6.0));

        let r = NonlinearityModel::pure_power(7.0).unwrap().check_hypotheses(3);
        assert!(!r.all_passed());
        assert_eq!(r.first_failure().unwrap().name, "f2");
        let err = r.into_result().unwrap_err().to_string();
        assert!(err.contains("f2"), "{err}");

        let m = NonlinearityModel::new(vec![
            PowerTerm {
                coefficient: 1.0,
                exponent: 3.0,
            },
            PowerTerm {
                coefficient: 1.0,
                exponent: 5.0,
            },
        ])
        .unwrap();
        let r = m.check_hypotheses(3);
        assert!(r.all_passed());
        assert_eq!(r.gamma, 3.0);
        assert_eq!((r.growth_witness.0, r.growth_witness.1), (1.0, 3.0));

        // no upper bound in two dimensions
        assert!(NonlinearityModel::pure_power(9.0)
            .unwrap()
            .check_hypotheses(2)
            .all_passed());
    }

    #[test]
    fn growth_witness_bounds_derivative() {
        let m = NonlinearityModel::new(vec![
            PowerTerm {
                coefficient: 0.5,
                exponent: 3.0,
            },
            PowerTerm {
                coefficient: 2.0,
                exponent: 4.5,
            },
            PowerTerm {
                coefficient: 1.0,
                exponent: 5.0,
            },
        ])
        .unwrap();
        let (s1, s2, c) = m.check_hypotheses(3).growth_witness;
        for k in 0..200 {
            let s = 1e-3 * 1.07f64.powi(k);
            assert!(m.derivative(s) <= c * (s.powf(s1) + s.powf(s2)) * (1.0 + 1e-12));
        }
    }

    fn model_strategy() -> impl Strategy<Value = NonlinearityModel> {
        prop::collection::vec((0.1f64..3.0, 2.05f64..6.0), 1..4).prop_map(|terms| {
            NonlinearityModel::new(
                terms
                    .into_iter()
                    .map(|(coefficient, exponent)| PowerTerm { coefficient, exponent })
                    .collect(),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn antiderivative_consistent(m in model_strategy(), s in -10.0f64..10.0) {
            let eps = 1e-4;
            let defect = (m.antiderivative(s + eps) - m.antiderivative(s) - eps * m.f(s)).abs();
            // second-order Taylor remainder bound: ½ε² max|f'| on the interval
            let bound = 0.5 * eps * eps * m.derivative(s.abs() + eps) + 1e-12 * m.antiderivative(s.abs() + eps).max(1.0);
            prop_assert!(defect <= bound * 1.01, "defect {} bound {}", defect, bound);
        }

        #[test]
        fn ambrosetti_rabinowitz(m in model_strategy(), s in -10.0f64..10.0) {
            prop_assume!(s != 0.0);
            let gamma = m.gamma();
            prop_assert!(gamma * m.antiderivative(s) <= m.f(s) * s * (1.0 + 1e-12));
        }

        #[test]
        fn quotient_strictly_increasing(m in model_strategy(), a in 1e-3f64..5.0, d in 1e-3f64..1.0) {
            let q = |s: f64| m.f(s) / s.abs();
            prop_assert!(q(a + d) > q(a));
            prop_assert!(q(-a) > q(-a - d));
        }

        #[test]
        fn derivative_matches_central_difference(m in model_strategy(), s in -5.0f64..5.0) {
            prop_assume!(s.abs() > 0.05);
            let eps = 1e-6;
            let fd = (m.f(s + eps) - m.f(s - eps)) / (2.0 * eps);
            prop_assert!((fd - m.derivative(s)).abs() <= 1e-6 * (1.0 + m.derivative(s).abs()));
        }

        #[test]
        fn odd_and_even(m in model_strategy(), s in -10.0f64..10.0) {
            prop_assert_eq!(m.f(-s), -m.f(s));
            prop_assert_eq!(m.antiderivative(-s), m.antiderivative(s));
        }
    }
}
