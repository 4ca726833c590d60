//! Exact algebra on exponential polynomials `sum_i c_i t^{k_i} e^{r_i t}`.
//!
//! First and second moments of the branching process solve triangular chains
//! of linear ODEs `y' = kappa y + f(t)` whose forcings are products of
//! earlier solutions, so the whole moment set stays inside this class. Doing
//! the integrals symbolically (instead of numerically) gives moment curves
//! that cost a handful of exponentials to evaluate at any `t` and are exact
//! up to rounding, including the resonant case where a forcing rate collides
//! with `kappa` and polynomial-in-`t` factors appear.

use crate::{Error, Result};

/// Rates closer than this are treated as equal: colliding terms are merged
/// and a forcing rate this close to the homogeneous rate takes the resonant
/// (polynomial) branch instead of dividing by a vanishing gap.
pub const RATE_MERGE_TOL: f64 = 1e-12;

/// Terms with `|coef|` below this fraction of the largest coefficient are
/// dropped during normalization; they are rounding residue of cancellations.
pub const COEF_PRUNE_REL: f64 = 1e-14;

/// Largest allowed power of `t`. The moment chains for this model class
/// produce at most cubic factors even at fully degenerate rates, so hitting
/// the cap means a bug upstream, not a bigger model.
pub const MAX_POWER: u32 = 8;

/// One term `coef * t^power * e^(rate * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub coef: f64,
    pub power: u32,
    pub rate: f64,
}

/// A normalized sum of [`Term`]s. Kept sorted by (rate, power) with
/// like terms merged and negligible coefficients pruned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExpSum {
    terms: Vec<Term>,
}

impl ExpSum {
    /// The zero function.
    pub fn zero() -> Self {
        ExpSum { terms: Vec::new() }
    }

    /// The constant function `c`.
    pub fn constant(c: f64) -> Self {
        ExpSum::from_terms(vec![Term {
            coef: c,
            power: 0,
            rate: 0.0,
        }])
    }

    /// The single term `coef * t^power * e^(rate t)`.
    pub fn term(coef: f64, power: u32, rate: f64) -> Self {
        assert!(power <= MAX_POWER, "term power {power} exceeds cap");
        ExpSum::from_terms(vec![Term { coef, power, rate }])
    }

    /// Build from raw terms, normalizing.
    pub fn from_terms(terms: Vec<Term>) -> Self {
        let mut s = ExpSum { terms };
        s.normalize();
        s
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sort, merge terms whose rates agree to [`RATE_MERGE_TOL`] (absolute)
    /// and powers agree exactly, then prune relatively negligible terms.
    fn normalize(&mut self) {
        self.terms.retain(|t| t.coef != 0.0);
        for t in &self.terms {
            debug_assert!(
                t.coef.is_finite() && t.rate.is_finite(),
                "non-finite term {t:?}"
            );
        }
        self.terms.sort_by(|a, b| {
            a.rate
                .partial_cmp(&b.rate)
                .unwrap()
                .then(a.power.cmp(&b.power))
        });
        let mut merged: Vec<Term> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            if let Some(last) = merged
                .iter_mut()
                .rev()
                .take_while(|m| (m.rate - t.rate).abs() <= RATE_MERGE_TOL)
                .find(|m| m.power == t.power)
            {
                last.coef += t.coef;
            } else {
                merged.push(t);
            }
        }
        let max_coef = merged.iter().fold(0.0_f64, |acc, t| acc.max(t.coef.abs()));
        merged.retain(|t| t.coef.abs() > COEF_PRUNE_REL * max_coef);
        self.terms = merged;
    }

    pub fn add(&self, other: &ExpSum) -> ExpSum {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        ExpSum::from_terms(terms)
    }

    pub fn scale(&self, c: f64) -> ExpSum {
        ExpSum::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    coef: c * t.coef,
                    ..*t
                })
                .collect(),
        )
    }

    /// Pointwise product. Powers add (capped), rates add.
    pub fn mul(&self, other: &ExpSum) -> Result<ExpSum> {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let power = a.power + b.power;
                if power > MAX_POWER {
                    return Err(Error::InvalidParams(format!(
                        "exponential polynomial power {power} exceeds cap {MAX_POWER}; \
                         moment cascade degenerated unexpectedly"
                    )));
                }
                terms.push(Term {
                    coef: a.coef * b.coef,
                    power,
                    rate: a.rate + b.rate,
                });
            }
        }
        Ok(ExpSum::from_terms(terms))
    }

    /// Shift every rate by `dr`, i.e. multiply by `e^(dr t)`.
    pub fn shift_rate(&self, dr: f64) -> ExpSum {
        ExpSum::from_terms(
            self.terms
                .iter()
                .map(|t| Term {
                    rate: t.rate + dr,
                    ..*t
                })
                .collect(),
        )
    }

    /// Antiderivative vanishing at zero: `F(t) = int_0^t f(x) dx`.
    ///
    /// For `c t^k e^{rt}` with `|r| > RATE_MERGE_TOL` repeated integration
    /// by parts gives
    /// `e^{rt} sum_{i=0..k} (-1)^i k!/(k-i)! t^{k-i}/r^{i+1}  -  (-1)^k k!/r^{k+1}`;
    /// a rate within tolerance of zero integrates as a pure power,
    /// `c t^{k+1}/(k+1)`.
    pub fn integrate0(&self) -> Result<ExpSum> {
        let mut terms = Vec::new();
        for t in &self.terms {
            if t.rate.abs() <= RATE_MERGE_TOL {
                if t.power + 1 > MAX_POWER {
                    return Err(Error::InvalidParams(format!(
                        "integration would exceed power cap {MAX_POWER}"
                    )));
                }
                terms.push(Term {
                    coef: t.coef / (t.power + 1) as f64,
                    power: t.power + 1,
                    rate: 0.0,
                });
            } else {
                let k = t.power;
                let mut fact = 1.0; // k!/(k-i)!
                let mut rpow = t.rate; // r^{i+1}
                let mut sign = 1.0;
                for i in 0..=k {
                    terms.push(Term {
                        coef: t.coef * sign * fact / rpow,
                        power: k - i,
                        rate: t.rate,
                    });
                    if i < k {
                        fact *= (k - i) as f64;
                        rpow *= t.rate;
                        sign = -sign;
                    }
                }
                terms.push(Term {
                    coef: -t.coef * sign * fact / rpow,
                    power: 0,
                    rate: 0.0,
                });
            }
        }
        Ok(ExpSum::from_terms(terms))
    }

    /// Exact solution of `y' = kappa y + f(t)`, `y(0) = y0`, namely
    /// `e^{kappa t} (y0 + int_0^t e^{-kappa x} f(x) dx)`. Forcing rates that
    /// collide with `kappa` flow through the zero-rate branch of
    /// [`ExpSum::integrate0`] and come out as resonant `t^{k+1}` terms.
    pub fn solve_linear_ode(kappa: f64, forcing: &ExpSum, y0: f64) -> Result<ExpSum> {
        let inner = forcing.shift_rate(-kappa).integrate0()?;
        let mut shifted = inner.shift_rate(kappa);
        if y0 != 0.0 {
            shifted = shifted.add(&ExpSum::term(y0, 0, kappa));
        }
        Ok(shifted)
    }

    /// Termwise derivative (power rule + rate factor).
    pub fn derivative(&self) -> ExpSum {
        let mut terms = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            if t.power > 0 {
                terms.push(Term {
                    coef: t.coef * t.power as f64,
                    power: t.power - 1,
                    rate: t.rate,
                });
            }
            terms.push(Term {
                coef: t.coef * t.rate,
                power: t.power,
                rate: t.rate,
            });
        }
        ExpSum::from_terms(terms)
    }

    /// Evaluate at `t`. Terms are grouped by rate so each exponential is
    /// computed once, with the polynomial factor accumulated by Horner's
    /// rule over descending powers.
    pub fn eval(&self, t: f64) -> f64 {
        let mut total = 0.0;
        let mut i = 0;
        while i < self.terms.len() {
            let rate = self.terms[i].rate;
            let mut j = i;
            while j < self.terms.len() && self.terms[j].rate == rate {
                j += 1;
            }
            // terms[i..j] share a rate and are sorted by ascending power;
            // Horner over descending powers, stepping by the power gaps
            let mut poly = 0.0;
            let mut prev_power = None;
            for term in self.terms[i..j].iter().rev() {
                if let Some(p) = prev_power {
                    poly *= t.powi((p - term.power) as i32);
                }
                poly += term.coef;
                prev_power = Some(term.power);
            }
            if let Some(p) = prev_power {
                poly *= t.powi(p as i32);
            }
            total += poly * (rate * t).exp();
            i = j;
        }
        total
    }

    /// Evaluate on many points.
    pub fn eval_many(&self, ts: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.eval(t)).collect()
    }

    /// Sum of absolute term magnitudes at `t >= 0`. This is the scale against
    /// which [`eval`](ExpSum::eval) cancels: the attainable absolute accuracy
    /// of the f64 evaluation is a small multiple of machine epsilon times
    /// this value, however exact the coefficients are. The ratio
    /// `abs_eval(t) / |eval(t)|` is the condition number of the sum.
    pub fn abs_eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.coef.abs() * t.powi(term.power as i32) * (term.rate * t).exp())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        let scale = 1.0 + a.abs().max(b.abs());
        assert!(
            (a - b).abs() <= tol * scale,
            "{what}: {a} vs {b} (diff {})",
            (a - b).abs()
        );
    }

    /// Adaptive Simpson quadrature, used as an independent oracle for
    /// integrate0. Plain recursion with interval bisection.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn rule<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = rule(f, a, m);
            let right = rule(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, right, tol / 2.0, depth - 1)
            }
        }
        let scale = 1.0 + rule(&f, a, b).abs();
        rec(&f, a, b, rule(&f, a, b), tol * scale, 24)
    }

    #[test]
    fn integrate0_matches_quadrature() {
        // a handful of awkward term mixes, including near-zero rates and
        // high powers; expected values come from adaptive Simpson
        let cases: Vec<ExpSum> = vec![
            ExpSum::term(2.0, 0, -0.3),
            ExpSum::term(1.0, 2, 0.7).add(&ExpSum::term(-0.5, 1, -0.2)),
            ExpSum::term(3.0, 3, -1.5)
                .add(&ExpSum::term(0.25, 0, 0.0))
                .add(&ExpSum::term(-1.0, 1, 0.4)),
            ExpSum::term(1.0, 4, -0.05),
            ExpSum::term(5.0, 1, 1e-13), // treated as rate zero
        ];
        for (i, f) in cases.iter().enumerate() {
            let big_f = f.integrate0().unwrap();
            assert_close(big_f.eval(0.0), 0.0, 1e-14, "F(0)");
            for &t in &[0.1, 0.9, 2.7, 6.0, 11.0] {
                let want = simpson(|x| f.eval(x), 0.0, t, 1e-12);
                assert_close(big_f.eval(t), want, 1e-8, &format!("case {i} at t={t}"));
            }
        }
    }

    #[test]
    fn integrate0_single_exponential_closed_form() {
        // int_0^t 2 e^{-0.3 x} dx = (2/0.3)(1 - e^{-0.3 t})
        let big_f = ExpSum::term(2.0, 0, -0.3).integrate0().unwrap();
        for &t in &[0.0, 0.5, 3.0, 10.0] {
            let want = 2.0 / 0.3 * (1.0 - (-0.3f64 * t).exp());
            assert_close(big_f.eval(t), want, 1e-14, "exp integral");
        }
    }

    #[test]
    fn homogeneous_solution_is_exponential() {
        let y = ExpSum::solve_linear_ode(-0.35, &ExpSum::zero(), 2.5).unwrap();
        assert_eq!(y.terms().len(), 1);
        for &t in &[0.0, 1.0, 4.0] {
            assert_close(y.eval(t), 2.5 * (-0.35f64 * t).exp(), 1e-15, "homog");
        }
    }

    #[test]
    fn resonant_forcing_produces_t_exponential() {
        // y' = -0.2 y + 3 e^{-0.2 t}, y(0)=0  =>  y = 3 t e^{-0.2 t}
        let y = ExpSum::solve_linear_ode(-0.2, &ExpSum::term(3.0, 0, -0.2), 0.0).unwrap();
        assert_eq!(y.terms().len(), 1);
        let term = y.terms()[0];
        assert_eq!(term.power, 1);
        assert!((term.coef - 3.0).abs() < 1e-15);
        assert!((term.rate + 0.2).abs() < 1e-15);
    }

    #[test]
    fn near_resonant_rates_take_the_resonant_branch() {
        // forcing rate differs from kappa by less than the merge tolerance;
        // dividing by the 1e-13 gap would produce garbage coefficients
        let y =
            ExpSum::solve_linear_ode(-0.2, &ExpSum::term(3.0, 0, -0.2 + 1e-13), 0.0).unwrap();
        assert_eq!(y.terms().len(), 1);
        assert_eq!(y.terms()[0].power, 1);
        for &t in &[1.0, 10.0] {
            assert_close(y.eval(t), 3.0 * t * (-0.2f64 * t).exp(), 1e-12, "near-resonant");
        }
    }

    #[test]
    fn like_terms_merge_and_residue_prunes() {
        let s = ExpSum::term(1.0, 0, -0.5).add(&ExpSum::term(1.0, 0, -0.5 + 1e-13));
        assert_eq!(s.terms().len(), 1);
        assert!((s.terms()[0].coef - 2.0).abs() < 1e-15);

        let cancelled = ExpSum::term(1.0, 0, -0.5).add(&ExpSum::term(-1.0, 0, -0.5));
        assert!(cancelled.is_zero());

        let tiny = ExpSum::term(1.0, 0, -0.5).add(&ExpSum::term(1e-16, 0, 0.3));
        assert_eq!(tiny.terms().len(), 1, "relative prune drops rounding residue");
    }

    #[test]
    fn power_cap_is_a_clear_error() {
        let t4 = ExpSum::term(1.0, 4, 0.0);
        let t5 = ExpSum::term(1.0, 5, 0.0);
        let err = t4.mul(&t5).unwrap_err();
        assert!(err.to_string().contains("power"), "{err}");
    }

    #[test]
    fn eval_groups_rates() {
        // same value whether terms share an exponential or not
        let s = ExpSum::from_terms(vec![
            Term { coef: 2.0, power: 0, rate: -0.4 },
            Term { coef: -1.5, power: 2, rate: -0.4 },
            Term { coef: 0.7, power: 1, rate: 0.1 },
        ]);
        for &t in &[0.0, 0.3, 2.0, 7.5] {
            let direct = 2.0 * (-0.4f64 * t).exp() - 1.5 * t * t * (-0.4f64 * t).exp()
                + 0.7 * t * (0.1f64 * t).exp();
            assert_close(s.eval(t), direct, 1e-14, "grouped eval");
        }
    }

    fn arb_expsum() -> impl Strategy<Value = ExpSum> {
        proptest::collection::vec(
            (-3.0f64..3.0, 0u32..3, -2.0f64..1.0).prop_map(|(c, k, r)| Term {
                coef: c,
                power: k,
                rate: r,
            }),
            0..5,
        )
        .prop_map(ExpSum::from_terms)
    }

    proptest! {
        #[test]
        fn add_commutes(a in arb_expsum(), b in arb_expsum(), t in 0.0f64..8.0) {
            prop_assert!((a.add(&b).eval(t) - b.add(&a).eval(t)).abs() < 1e-9);
        }

        #[test]
        fn mul_distributes(a in arb_expsum(), b in arb_expsum(), c in arb_expsum(), t in 0.0f64..5.0) {
            let lhs = a.mul(&b.add(&c)).unwrap().eval(t);
            let rhs = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).eval(t);
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            prop_assert!((lhs - rhs).abs() < 1e-9 * scale, "{lhs} vs {rhs}");
        }

        #[test]
        fn derivative_inverts_integrate0(a in arb_expsum(), t in 0.01f64..8.0) {
            let back = a.integrate0().unwrap().derivative();
            let scale = 1.0 + a.eval(t).abs();
            prop_assert!((back.eval(t) - a.eval(t)).abs() < 1e-8 * scale);
        }

        #[test]
        fn ode_solution_satisfies_equation(
            f in arb_expsum(),
            kappa in -1.5f64..0.5,
            y0 in -2.0f64..2.0,
            t in 0.0f64..6.0,
        ) {
            let y = ExpSum::solve_linear_ode(kappa, &f, y0).unwrap();
            // near (but not at) resonance the representation carries huge
            // cancelling coefficients, so accuracy is relative to their size
            let coef_scale = 1.0
                + y.terms().iter().fold(0.0f64, |a, t| a.max(t.coef.abs()));
            prop_assert!(
                (y.eval(0.0) - y0).abs() < 1e-12 * coef_scale,
                "initial condition: {} vs {y0}", y.eval(0.0)
            );
            let resid = y.derivative().eval(t) - kappa * y.eval(t) - f.eval(t);
            let scale = coef_scale + y.eval(t).abs() + f.eval(t).abs();
            prop_assert!(resid.abs() < 1e-8 * scale, "residual {resid}");
        }
    }
}
