//! Closed-form probabilistic and deterministic forward-error bounds for
//! recursive summation.
//!
//! Notation: `n` terms, unit roundoff `u`, failure probability `delta`,
//! `lambda(delta) = sqrt(2 ln(2/delta))`, data mean `mu_x` and half-width
//! `C_x`, partial-sum vector norm `||s_n||_2 = ||[s_2, ..., s_n]||_2`.
//!
//! | bound | value |
//! |---|---|
//! | product envelope | `gamma~_n(delta) = exp((lambda sqrt(n) u + n u^2) / (1 - u)) - 1` |
//! | structural, independent errors | `u ||s_n|| lambda(delta/2) (1 + gamma~_n(delta/2))` |
//! | structural, mean-independent errors | `G(kappa, n) lambda ||s_n||_2 u`, `lambda = lambda(delta/(n-1))` |
//! | a priori, mean-independent | `G(kappa, n) (lambda |mu_x| n^1.5 + lambda^2 C_x n) u`, `lambda = lambda(delta/n)` |
//! | a priori, independent | `(1 + gamma~_n(delta/3)) (lambda |mu_x| n^1.5 + lambda^2 C_x n) u`, `lambda = lambda(delta/3)` |
//!
//! with `kappa = lambda sqrt(n) u` and `G(kappa, n) = (1 - kappa^(n-1)) / (1 - kappa)`.
//!
//! The bounds built on independent errors need `u <- 2u` under stochastic
//! rounding; that substitution is applied by the caller through
//! [`BoundInputs::with_stochastic_substitution`]. The mean-independent
//! bounds use the nominal `u` for both rounding modes.
//!
//! Values that overflow are reported as `+inf` with `informative == false`.

use std::fmt;

use thiserror::Error;
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("this bound needs the partial-sum norm ||s_n||_2")]
    MissingNorm,
}

fn domain(msg: impl Into<String>) -> BoundsError {
    BoundsError::Domain(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Theorem {
    /// Envelope on `prod (1 + delta_j)`.
    Lemma32,
    /// Structural bound, independent errors.
    Thm33,
    /// Structural bound to all orders, mean-independent errors.
    Thm41,
    /// A priori bound, mean-independent errors.
    Thm51,
    /// A priori bound, independent errors.
    Thm52,
    /// High-probability bound on `||s_n||_2` for random data.
    SBound,
    /// Deterministic `gamma_{n-1} sum |x_i|`.
    Classical,
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Theorem::Lemma32 => "lemma32",
            Theorem::Thm33 => "thm33",
            Theorem::Thm41 => "thm41",
            Theorem::Thm51 => "thm51",
            Theorem::Thm52 => "thm52",
            Theorem::SBound => "sbound",
            Theorem::Classical => "classical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs<T> {
    pub n: usize,
    /// Effective unit roundoff, already doubled if the caller substituted `u <- 2u`.
    pub u: T,
    pub failure_prob: T,
    pub mu_x: T,
    pub c_x: T,
    pub s_norm: Option<T>,
    pub u_substituted: bool,
}

impl<T: Scalar> BoundInputs<T> {
    pub fn new(n: usize, u: T, failure_prob: T) -> Self {
        BoundInputs {
            n,
            u,
            failure_prob,
            mu_x: T::zero(),
            c_x: T::zero(),
            s_norm: None,
            u_substituted: false,
        }
    }

    pub fn with_data(mut self, mu_x: T, c_x: T) -> Self {
        self.mu_x = mu_x;
        self.c_x = c_x;
        self
    }

    pub fn with_norm(mut self, s_norm: T) -> Self {
        self.s_norm = Some(s_norm);
        self
    }

    /// Applies `u <- 2u` (stochastic rounding under the independent-error model).
    pub fn with_stochastic_substitution(mut self) -> Self {
        if !self.u_substituted {
            self.u = self.u + self.u;
            self.u_substituted = true;
        }
        self
    }

    pub fn validate(&self) -> Result<(), BoundsError> {
        if self.n < 2 {
            return Err(domain(format!("n must be at least 2, got {}", self.n)));
        }
        check_u(self.u)?;
        check_delta(self.failure_prob)?;
        if !self.mu_x.is_finite() {
            return Err(domain("mu_x must be finite"));
        }
        if !(self.c_x >= T::zero()) || !self.c_x.is_finite() {
            return Err(domain("C_x must be finite and nonnegative"));
        }
        if let Some(s) = self.s_norm {
            if !(s >= T::zero()) || !s.is_finite() {
                return Err(domain("||s_n|| must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    fn note(&self) -> &'static str {
        if self.u_substituted {
            "2u (stochastic substitution)"
        } else {
            "u"
        }
    }

    fn norm(&self) -> Result<T, BoundsError> {
        self.s_norm.ok_or(BoundsError::MissingNorm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue<T> {
    pub value: T,
    pub theorem: Theorem,
    pub effective_u_note: &'static str,
    /// False when the value overflowed to `+inf`.
    pub informative: bool,
}

impl<T: Scalar> BoundValue<T> {
    fn new(value: T, theorem: Theorem, effective_u_note: &'static str) -> Self {
        if value.is_finite() {
            BoundValue { value, theorem, effective_u_note, informative: true }
        } else {
            BoundValue { value: T::infinity(), theorem, effective_u_note, informative: false }
        }
    }
}

fn check_delta<T: Scalar>(delta: T) -> Result<(), BoundsError> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(domain(format!("failure probability must lie in (0, 1), got {delta}")))
    }
}

fn check_u<T: Scalar>(u: T) -> Result<(), BoundsError> {
    if u >= T::zero() && u < T::one() {
        Ok(())
    } else {
        Err(domain(format!("unit roundoff must lie in [0, 1), got {u}")))
    }
}

/// Product of nonnegative factors with `0 * inf = 0`.
fn product<T: Scalar>(factors: &[T]) -> T {
    if factors.iter().any(|&f| f == T::zero()) {
        T::zero()
    } else {
        factors.iter().fold(T::one(), |acc, &f| acc * f)
    }
}

/// `sqrt(2 ln(2 / delta))`.
pub fn lambda<T: Scalar>(delta: T) -> Result<T, BoundsError> {
    check_delta(delta)?;
    Ok(lambda_unchecked(delta))
}

fn lambda_unchecked<T: Scalar>(delta: T) -> T {
    let two = T::cast(2.0);
    (two * (two / delta).ln()).sqrt()
}

/// `delta / m` for an integer divisor, kept inside the open unit interval.
fn split<T: Scalar>(delta: T, m: usize) -> T {
    delta / T::count(m)
}

/// `exp((lambda sqrt(n) u + n u^2) / (1 - u)) - 1` for a given `lambda`.
pub fn gamma_tilde_with_lambda<T: Scalar>(n: usize, lambda: T, u: T) -> T {
    let nf = T::count(n);
    ((lambda * nf.sqrt() * u + nf * u * u) / (T::one() - u)).exp_m1()
}

pub fn gamma_tilde<T: Scalar>(n: usize, delta: T, u: T) -> Result<T, BoundsError> {
    if n < 1 {
        return Err(domain("n must be at least 1"));
    }
    check_u(u)?;
    Ok(gamma_tilde_with_lambda(n, lambda(delta)?, u))
}

/// `lambda(delta / (n - 1)) sqrt(n) u`.
pub fn kappa<T: Scalar>(n: usize, delta: T, u: T) -> Result<T, BoundsError> {
    if n < 2 {
        return Err(domain(format!("n must be at least 2, got {n}")));
    }
    check_u(u)?;
    check_delta(delta)?;
    Ok(lambda_unchecked(split(delta, n - 1)) * T::count(n).sqrt() * u)
}

/// Width of the neighborhood of `kappa = 1` evaluated as an explicit series.
pub const SERIES_WINDOW: f64 = 1e-6;

/// `(1 - kappa^(n-1)) / (1 - kappa) = sum_{i=0}^{n-2} kappa^i`.
///
/// Near `kappa = 1` the partial sum is evaluated directly (in binomial form
/// `sum_k C(n-1, k+1) (kappa-1)^k`); elsewhere through
/// `expm1((n-1) ln1p(kappa-1)) / (kappa-1)`, which avoids the cancellation
/// in both the numerator and the denominator.
pub fn geometric_factor<T: Scalar>(kappa: T, n: usize) -> T {
    let m = n.saturating_sub(1);
    if m == 0 {
        return T::zero();
    }
    let h = kappa - T::one();
    let mf = T::count(m);
    if h.abs() < T::cast(SERIES_WINDOW) && mf * h.abs() <= T::one() {
        geometric_series(h, m)
    } else {
        geometric_closed(kappa, m)
    }
}

fn geometric_series<T: Scalar>(h: T, m: usize) -> T {
    let mf = T::count(m);
    let mut term = mf;
    let mut sum = mf;
    for k in 1..m {
        term = term * (mf - T::count(k)) / T::count(k + 1) * h;
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
    }
    sum
}

fn geometric_closed<T: Scalar>(kappa: T, m: usize) -> T {
    let h = kappa - T::one();
    if h == T::zero() {
        return T::count(m);
    }
    if kappa == T::zero() {
        return T::one();
    }
    (T::count(m) * h.ln_1p()).exp_m1() / h
}

/// Structural bound assuming independent errors.
pub fn bound_thm33<T: Scalar>(inputs: &BoundInputs<T>) -> Result<BoundValue<T>, BoundsError> {
    inputs.validate()?;
    let s = inputs.norm()?;
    let half = inputs.failure_prob / T::cast(2.0);
    let lam = lambda_unchecked(half);
    let gamma = gamma_tilde_with_lambda(inputs.n, lam, inputs.u);
    let value = product(&[inputs.u, s, lam, T::one() + gamma]);
    Ok(BoundValue::new(value, Theorem::Thm33, inputs.note()))
}

/// Structural bound to all orders assuming mean-independent errors.
pub fn bound_thm41<T: Scalar>(inputs: &BoundInputs<T>) -> Result<BoundValue<T>, BoundsError> {
    inputs.validate()?;
    let s = inputs.norm()?;
    let delta = f64_of(inputs.failure_prob);
    let source = LambdaSource::Split { delta, divisor: inputs.n - 1 };
    let scale = product(&[source.value(), f64_of(s), f64_of(inputs.u)]);
    let value = T::cast(scaled_kappa_geometric(source, inputs.n, f64_of(inputs.u), scale));
    Ok(BoundValue::new(value, Theorem::Thm41, inputs.note()))
}

fn f64_of<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// How `lambda` enters `kappa = lambda sqrt(n) u`.
#[derive(Clone, Copy)]
enum LambdaSource {
    /// `lambda(delta / divisor)`.
    Split { delta: f64, divisor: usize },
    Fixed(f64),
}

impl LambdaSource {
    fn value(self) -> f64 {
        match self {
            LambdaSource::Split { delta, divisor } => lambda_unchecked(delta / divisor as f64),
            LambdaSource::Fixed(lam) => lam,
        }
    }
}

/// Below this `n - 1`, or for `kappa <= WIDE_KAPPA`, binary64 evaluation of
/// the geometric factor keeps its condition number under a few hundred.
const WIDE_ORDER: usize = 256;
const WIDE_KAPPA: f64 = 0.99;
const WIDE_BITS: usize = 128;

type Wide = FBig<HalfEven, 2>;

fn wide(x: f64) -> Wide {
    Wide::try_from(x).expect("finite input").with_precision(WIDE_BITS).value()
}

/// `G(kappa, n) * scale` for `kappa = lambda sqrt(n) u`.
///
/// For `kappa` near or above one the factor amplifies the relative error of
/// `kappa` by about `n`, so `kappa`, `kappa^(n-1)` and the product with
/// `scale` are formed in 128-bit arithmetic there. The product is also taken
/// there when `G` alone would overflow.
fn scaled_kappa_geometric(source: LambdaSource, n: usize, u: f64, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let m = n.saturating_sub(1);
    let lam = source.value();
    let k = lam * (n as f64).sqrt() * u;
    let g = geometric_factor(k, n);
    if (m <= WIDE_ORDER || k <= WIDE_KAPPA) && g.is_finite() || !k.is_finite() || !scale.is_finite() {
        return g * scale;
    }
    let log_estimate = m as f64 * k.ln() - (k - 1.0).abs().ln() + scale.ln();
    if log_estimate > 712.0 {
        return f64::INFINITY;
    }
    let lam = match source {
        LambdaSource::Split { delta, divisor } => {
            let two = wide(2.0);
            let arg = wide(2.0 * divisor as f64) / wide(delta);
            (two * arg.ln()).sqrt()
        }
        LambdaSource::Fixed(lam) => wide(lam),
    };
    let k = lam * wide(n as f64).sqrt() * wide(u);
    let h = k - wide(1.0);
    let g = if h == Wide::ZERO {
        wide(m as f64)
    } else {
        (wide(m as f64) * h.ln_1p()).exp_m1() / h
    };
    (g * wide(scale)).to_f64().value()
}

/// `n^1.5 |mu_x| + n C_x lambda(delta / n)`, a bound on `||s_n||_2` holding
/// with probability `1 - delta / n` for data satisfying `|x_i - mu_x| <= C_x`.
pub fn sbound<T: Scalar>(n: usize, delta: T, mu_x: T, c_x: T) -> Result<T, BoundsError> {
    if n < 1 {
        return Err(domain("n must be at least 1"));
    }
    check_delta(delta)?;
    if !(c_x >= T::zero()) {
        return Err(domain("C_x must be nonnegative"));
    }
    let nf = T::count(n);
    let lam = lambda_unchecked(split(delta, n));
    Ok(nf * nf.sqrt() * mu_x.abs() + product(&[nf, c_x, lam]))
}

/// `lambda |mu_x| n^1.5 + lambda^2 C_x n`.
fn data_term<T: Scalar>(n: usize, lam: T, mu_x: T, c_x: T) -> T {
    let nf = T::count(n);
    product(&[lam, mu_x.abs(), nf * nf.sqrt()]) + product(&[lam * lam, c_x, nf])
}

/// A priori bound for random data, mean-independent errors.
pub fn bound_thm51<T: Scalar>(inputs: &BoundInputs<T>) -> Result<BoundValue<T>, BoundsError> {
    inputs.validate()?;
    let source = LambdaSource::Split { delta: f64_of(inputs.failure_prob), divisor: inputs.n };
    Ok(thm51_value(inputs, source))
}

/// The mean-independent a priori bound with `lambda` fixed by the caller
/// (for instance `lambda = 1` to draw the empirical trend line).
pub fn bound_thm51_with_lambda<T: Scalar>(
    inputs: &BoundInputs<T>,
    lam: T,
) -> Result<BoundValue<T>, BoundsError> {
    inputs.validate()?;
    if !(lam >= T::zero()) || !lam.is_finite() {
        return Err(domain(format!("lambda must be finite and nonnegative, got {lam}")));
    }
    Ok(thm51_value(inputs, LambdaSource::Fixed(f64_of(lam))))
}

fn thm51_value<T: Scalar>(inputs: &BoundInputs<T>, source: LambdaSource) -> BoundValue<T> {
    let data = data_term(inputs.n, source.value(), f64_of(inputs.mu_x), f64_of(inputs.c_x));
    let scale = product(&[data, f64_of(inputs.u)]);
    let value = T::cast(scaled_kappa_geometric(source, inputs.n, f64_of(inputs.u), scale));
    BoundValue::new(value, Theorem::Thm51, inputs.note())
}

/// A priori bound for random data, independent errors.
pub fn bound_thm52<T: Scalar>(inputs: &BoundInputs<T>) -> Result<BoundValue<T>, BoundsError> {
    inputs.validate()?;
    let lam = lambda_unchecked(inputs.failure_prob / T::cast(3.0));
    Ok(thm52_value(inputs, lam))
}

pub fn bound_thm52_with_lambda<T: Scalar>(
    inputs: &BoundInputs<T>,
    lam: T,
) -> Result<BoundValue<T>, BoundsError> {
    inputs.validate()?;
    Ok(thm52_value(inputs, lam))
}

fn thm52_value<T: Scalar>(inputs: &BoundInputs<T>, lam: T) -> BoundValue<T> {
    let gamma = gamma_tilde_with_lambda(inputs.n, lam, inputs.u);
    let value = product(&[
        T::one() + gamma,
        data_term(inputs.n, lam, inputs.mu_x, inputs.c_x),
        inputs.u,
    ]);
    BoundValue::new(value, Theorem::Thm52, inputs.note())
}

/// `[1 - gamma~_n(delta), 1 + gamma~_n(delta)]`.
pub fn product_envelope<T: Scalar>(n: usize, delta: T, u: T) -> Result<(T, T), BoundsError> {
    let g = gamma_tilde(n, delta, u)?;
    Ok((T::one() - g, T::one() + g))
}

/// Deterministic `gamma_{n-1} sum |x_i|` with `gamma_m = m u / (1 - m u)`.
/// When `(n - 1) u >= 1` the bound is void and `+inf` is returned flagged
/// as uninformative.
pub fn classical_bound<T: Scalar>(n: usize, u: T, abs_data_sum: T) -> Result<BoundValue<T>, BoundsError> {
    if n < 1 {
        return Err(domain("n must be at least 1"));
    }
    check_u(u)?;
    if !(abs_data_sum >= T::zero()) {
        return Err(domain("sum |x_i| must be nonnegative"));
    }
    let mu = T::count(n - 1) * u;
    let value = if mu >= T::one() {
        T::infinity()
    } else {
        product(&[mu / (T::one() - mu), abs_data_sum])
    };
    Ok(BoundValue::new(value, Theorem::Classical, "u"))
}

/// Problem size at which `lambda sqrt(n) u = 1`.
pub fn crossover_n<T: Scalar>(lambda_val: T, u: T) -> T {
    let r = T::one() / (lambda_val * u);
    r * r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    const E: f64 = std::f64::consts::E;

    #[test]
    fn lambda_values() {
        assert!(close(lambda(2.0 / E).unwrap(), 2f64.sqrt(), 1e-15));
        let l = lambda(1e-16f64).unwrap();
        assert!(l > 8.66 && l <= 9.0);
        // 40-digit reference: 2.716203031481238996981540520007179743438
        assert!(close(lambda(0.05f64).unwrap(), 2.716203031481239, 1e-15));
        assert!(lambda(0.0f64).is_err());
        assert!(lambda(1.0f64).is_err());
        assert!(lambda(f64::NAN).is_err());
    }

    #[test]
    fn gamma_tilde_values() {
        assert_eq!(gamma_tilde(100, 0.05f64, 0.0).unwrap(), 0.0);
        // 40-digit reference: 6.913487119899124781771816005871824080404e-4
        let g = gamma_tilde(1, 2.0 / E, 2f64.powi(-11)).unwrap();
        assert!(close(g, 6.913487119899125e-4, 1e-14), "{g:e}");
        let u = 2f64.powi(-8);
        assert!(gamma_tilde(400, 0.05, u).unwrap() > gamma_tilde(100, 0.05, u).unwrap());
        assert!(gamma_tilde(0, 0.05, u).is_err());
        assert!(gamma_tilde(10, 0.05, 1.0).is_err());
    }

    #[test]
    fn kappa_values() {
        let u = 2f64.powi(-8);
        assert_eq!(kappa(10, 0.05, 0.0).unwrap(), 0.0);
        assert!(close(kappa(2, 2.0 / E, u).unwrap(), 2.0 * u, 1e-15));
        assert_eq!(kappa(50, 0.05, 2.0 * u).unwrap(), 2.0 * kappa(50, 0.05, u).unwrap());
        assert!(kappa(1, 0.05, u).is_err());
    }

    #[test]
    fn geometric_factor_values() {
        assert_eq!(geometric_factor(0.0f64, 7), 1.0);
        assert_eq!(geometric_factor(1.0f64, 7), 6.0);
        assert_eq!(geometric_factor(0.5f64, 3), 1.5);
        assert_eq!(geometric_factor(0.3f64, 2), 1.0);
        assert!(close(geometric_factor(2.0f64, 5), 15.0, 1e-15));
        assert!(geometric_factor(3.0f64, 1_000_000).is_infinite());
    }

    #[test]
    fn series_and_closed_forms_agree_near_one() {
        let ulp10 = 10.0 * f64::EPSILON;
        for n in [2usize, 3, 10, 1000, 100_000] {
            for h in [-9e-7, -1e-7, -3e-10, 1e-12, 2e-9, 5e-7, 9.9e-7] {
                let kappa = 1.0 + h;
                let series = geometric_series(kappa - 1.0, n - 1);
                let closed = geometric_closed(kappa, n - 1);
                assert!(close(series, closed, ulp10), "n={n} h={h:e}: {series} vs {closed}");
            }
        }
    }

    #[test]
    fn theorem_bounds_vanish_with_u_or_norm() {
        let base = BoundInputs::new(100, 0.0f64, 0.05).with_data(0.5, 1.0).with_norm(10.0);
        assert_eq!(bound_thm33(&base).unwrap().value, 0.0);
        assert_eq!(bound_thm41(&base).unwrap().value, 0.0);
        assert_eq!(bound_thm51(&base).unwrap().value, 0.0);
        assert_eq!(bound_thm52(&base).unwrap().value, 0.0);
        let zero_norm = BoundInputs::new(100, 2f64.powi(-8), 0.05).with_norm(0.0);
        assert_eq!(bound_thm33(&zero_norm).unwrap().value, 0.0);
        assert_eq!(bound_thm41(&zero_norm).unwrap().value, 0.0);
    }

    #[test]
    fn structural_bounds_need_a_norm() {
        let inputs = BoundInputs::new(100, 2f64.powi(-8), 0.05);
        assert_eq!(bound_thm33(&inputs), Err(BoundsError::MissingNorm));
        assert_eq!(bound_thm41(&inputs), Err(BoundsError::MissingNorm));
        assert!(bound_thm51(&inputs).is_ok());
    }

    #[test]
    fn thm41_for_two_terms() {
        let u = 2f64.powi(-8);
        let inputs = BoundInputs::new(2, u, 0.05).with_norm(3.0);
        let expected = lambda(0.05).unwrap() * 3.0 * u;
        assert!(close(bound_thm41(&inputs).unwrap().value, expected, 1e-15));
    }

    #[test]
    fn thm51_zero_mean_reduces_to_variance_term() {
        let u = 2f64.powi(-11);
        let n = 10_000;
        let inputs = BoundInputs::new(n, u, 0.05).with_data(0.0, 1.0);
        let lam = lambda(0.05 / n as f64).unwrap();
        let g = geometric_factor(lam * (n as f64).sqrt() * u, n);
        let expected = g * lam * lam * n as f64 * u;
        assert!(close(bound_thm51(&inputs).unwrap().value, expected, 1e-14));
    }

    #[test]
    fn thm52_approaches_first_order_as_u_shrinks() {
        let n = 1000;
        let lam = lambda(0.05f64 / 3.0).unwrap();
        let first_order = |u: f64| (lam * 0.5 * (n as f64).powf(1.5) + lam * lam * n as f64) * u;
        for u in [1e-8, 1e-12] {
            let inputs = BoundInputs::new(n, u, 0.05).with_data(0.5, 1.0);
            assert!(close(bound_thm52(&inputs).unwrap().value, first_order(u), 1e-3));
        }
    }

    #[test]
    fn sbound_values() {
        assert!(close(sbound(100, 0.05f64, 1.0, 0.0).unwrap(), 1000.0, 1e-15));
        let expected = 50.0 * lambda(0.05 / 50.0).unwrap();
        assert!(close(sbound(50, 0.05f64, 0.0, 1.0).unwrap(), expected, 1e-15));
        // 40-digit reference: 4603.614826002730075686489748696708838282
        assert!(close(sbound(1000, 0.05f64, 0.0, 1.0).unwrap(), 4603.614826002730, 1e-14));
    }

    #[test]
    fn classical_values() {
        let u = 2f64.powi(-8);
        assert!(close(classical_bound(2, u, 3.0).unwrap().value, u / (1.0 - u) * 3.0, 1e-15));
        assert_eq!(classical_bound(100, 0.0f64, 3.0).unwrap().value, 0.0);
        let expected = 99.0 * u / (1.0 - 99.0 * u) * 50.0;
        assert!(close(classical_bound(100, u, 50.0).unwrap().value, expected, 1e-15));
        let void = classical_bound(1000, u, 50.0).unwrap();
        assert!(void.value.is_infinite() && !void.informative);
    }

    #[test]
    fn crossover_anchors() {
        let fp16 = crossover_n(9.0f64, 2f64.powi(-11));
        let bf16 = crossover_n(9.0f64, 2f64.powi(-8));
        let fp32 = crossover_n(9.0f64, 2f64.powi(-24));
        assert!((5.0e4..=5.4e4).contains(&fp16));
        assert!((790.0..=830.0).contains(&bf16));
        assert!((3.3e12..=3.7e12).contains(&fp32));
        assert_eq!(crossover_n(1.0f64, 1.0), 1.0);
    }

    #[test]
    fn overflow_is_flagged() {
        let inputs = BoundInputs::new(10_000_000, 2f64.powi(-8), 0.05).with_data(0.0, 1.0);
        let v = bound_thm51(&inputs).unwrap();
        assert!(v.value.is_infinite() && !v.informative);
        let huge = BoundInputs { n: 1_000_000_000, ..inputs };
        let v = bound_thm52(&huge).unwrap();
        assert!(v.value.is_infinite() && !v.informative);
    }

    #[test]
    fn substitution_is_recorded() {
        let inputs = BoundInputs::new(100, 2f64.powi(-8), 0.05).with_data(0.0, 1.0);
        let doubled = inputs.with_stochastic_substitution().with_stochastic_substitution();
        assert_eq!(doubled.u, 2f64.powi(-7));
        assert_eq!(bound_thm52(&doubled).unwrap().effective_u_note, "2u (stochastic substitution)");
        assert_eq!(bound_thm52(&inputs).unwrap().effective_u_note, "u");
    }

    #[test]
    fn generic_over_f32() {
        let inputs = BoundInputs::new(1000, 2f32.powi(-8), 0.05).with_data(0.0, 1.0);
        let a = bound_thm51(&inputs).unwrap().value as f64;
        let b = bound_thm51(&BoundInputs::new(1000, 2f64.powi(-8), 0.05).with_data(0.0, 1.0))
            .unwrap()
            .value;
        assert!(close(a, b, 1e-5));
    }

    #[test]
    fn a_priori_chain_is_consistent() {
        // Mean-independent structural bound fed with the s-bound at delta (n-1)/n
        // reproduces the a priori bound exactly.
        for n in [2usize, 10, 500, 100_000] {
            for (mu, c) in [(0.0, 1.0), (0.5, 0.5), (-2.0, 3.0)] {
                let delta = 0.05f64;
                let u = 2f64.powi(-11);
                let s = sbound(n, delta, mu, c).unwrap();
                let structural = BoundInputs::new(n, u, delta * (n - 1) as f64 / n as f64).with_norm(s);
                let a_priori = BoundInputs::new(n, u, delta).with_data(mu, c);
                let lhs = bound_thm51(&a_priori).unwrap().value;
                let rhs = bound_thm41(&structural).unwrap().value;
                assert!(lhs >= rhs * (1.0 - 1e-12), "n={n}: {lhs} < {rhs}");
            }
        }
    }

    proptest! {
        #[test]
        fn bounds_are_monotone(
            n in 2usize..1_000_000,
            u_exp in 4i32..30,
            delta in 0.001f64..0.5,
            mu in -2.0f64..2.0,
            c in 0.0f64..3.0,
            s in 0.0f64..1e4,
        ) {
            let u = 2f64.powi(-u_exp);
            let base = BoundInputs::new(n, u, delta).with_data(mu, c).with_norm(s);
            let eval = |i: &BoundInputs<f64>| [
                bound_thm33(i).unwrap().value,
                bound_thm41(i).unwrap().value,
                bound_thm51(i).unwrap().value,
                bound_thm52(i).unwrap().value,
            ];
            let b0 = eval(&base);
            let variants = [
                BoundInputs { n: n + 1 + n / 3, ..base },
                BoundInputs { u: u * 1.5, ..base },
                BoundInputs { mu_x: mu * 1.5, ..base },
                BoundInputs { c_x: c * 1.5 + 0.1, ..base },
                BoundInputs { s_norm: Some(s * 2.0 + 1.0), ..base },
                BoundInputs { failure_prob: delta / 2.0, ..base },
            ];
            for b in &b0 {
                prop_assert!(*b >= 0.0);
            }
            for v in &variants {
                let b1 = eval(v);
                for (lo, hi) in b0.iter().zip(&b1) {
                    prop_assert!(*hi >= *lo * (1.0 - 1e-12), "{lo} -> {hi} for {v:?}");
                }
            }
        }
    }
}
