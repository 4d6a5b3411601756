//! Reduced-precision binary formats emulated inside a wider carrier.
//!
//! A [`FloatFormat`] is described by its precision `p` (significand bits,
//! implicit bit included) and its exponent width. Values of the format are
//! stored as exact carrier values; a rounding operation maps an arbitrary
//! finite carrier value onto one of its two enclosing format members.
//!
//! Two rounding modes are supported:
//!
//! * [`RoundingMode::NearestEven`]: IEEE round-to-nearest, ties to even.
//! * [`RoundingMode::Stochastic`]: round up to `hi` with probability
//!   `(x - lo) / (hi - lo)` and down to `lo` otherwise, which makes the
//!   rounding error mean zero. Representable inputs consume no randomness.
//!
//! Overflow past the largest finite member is a hard error.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmuError {
    #[error("value {value:e} exceeds the largest finite {format} value")]
    Overflow { value: f64, format: FloatFormat },
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("relative perturbation undefined for a zero input")]
    ZeroInput,
    #[error("invalid format: {0}")]
    InvalidFormat(String),
}

/// A binary floating-point format with `precision` significand bits and
/// `exponent_bits` exponent bits, IEEE-style biased exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FloatFormat {
    precision: u32,
    exponent_bits: u32,
    subnormals: bool,
}

impl FloatFormat {
    /// IEEE binary16.
    pub const FP16: FloatFormat = FloatFormat { precision: 11, exponent_bits: 5, subnormals: true };
    /// bfloat16.
    pub const BF16: FloatFormat = FloatFormat { precision: 8, exponent_bits: 8, subnormals: true };
    /// IEEE binary32.
    pub const FP32: FloatFormat = FloatFormat { precision: 24, exponent_bits: 8, subnormals: true };

    /// Builds a custom format. Every member must embed exactly in binary64,
    /// hence `precision + exponent_bits <= 53` and `exponent_bits <= 11`.
    pub fn new(precision: u32, exponent_bits: u32) -> Result<Self, EmuError> {
        if precision < 2 || exponent_bits < 2 {
            return Err(EmuError::InvalidFormat(format!(
                "precision and exponent width must be at least 2 (got p={precision}, e={exponent_bits})"
            )));
        }
        if precision + exponent_bits > 53 || exponent_bits > 11 {
            return Err(EmuError::InvalidFormat(format!(
                "p={precision}, e={exponent_bits} does not embed in binary64"
            )));
        }
        Ok(FloatFormat { precision, exponent_bits, subnormals: true })
    }

    pub fn with_subnormals(mut self, enabled: bool) -> Self {
        self.subnormals = enabled;
        self
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    pub fn exponent_bits(&self) -> u32 {
        self.exponent_bits
    }

    pub fn subnormals_enabled(&self) -> bool {
        self.subnormals
    }

    /// Largest unbiased exponent of a finite value.
    pub fn emax(&self) -> i32 {
        (1 << (self.exponent_bits - 1)) - 1
    }

    /// Exponent of the smallest positive normal value.
    pub fn emin(&self) -> i32 {
        1 - self.emax()
    }

    /// Unit roundoff `u = 2^-p`.
    pub fn unit_roundoff<T: Scalar>(&self) -> T {
        T::pow2(-(self.precision as i32))
    }

    /// Largest finite member, `(2 - 2^(1-p)) * 2^emax`.
    pub fn max_finite<T: Scalar>(&self) -> T {
        let p = self.precision as i32;
        (T::pow2(p) - T::one()).ldexp(self.emax() - p + 1)
    }

    pub fn min_normal<T: Scalar>(&self) -> T {
        T::pow2(self.emin())
    }

    /// Whether every member of this format is exactly representable in `T`.
    pub fn fits_carrier<T: Scalar>(&self) -> bool {
        let lowest = if self.subnormals {
            self.emin() - self.precision as i32 + 1
        } else {
            self.emin()
        };
        self.precision <= T::MANTISSA_DIGITS
            && self.emax() <= T::MAX_FINITE_EXP
            && lowest >= T::MIN_SUBNORMAL_EXP
    }

    /// Whether `x` (assumed a member) lies strictly inside the subnormal range.
    pub fn is_subnormal<T: Scalar>(&self, x: T) -> bool {
        x != T::zero() && x.abs() < self.min_normal::<T>()
    }
}

impl fmt::Display for FloatFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = FloatFormat { subnormals: true, ..*self };
        if base == FloatFormat::FP16 {
            write!(f, "fp16")
        } else if base == FloatFormat::BF16 {
            write!(f, "bf16")
        } else if base == FloatFormat::FP32 {
            write!(f, "fp32")
        } else {
            write!(f, "custom:{},{}", self.precision, self.exponent_bits)
        }
    }
}

impl FromStr for FloatFormat {
    type Err = EmuError;

    /// Accepts `fp16`, `bf16`, `fp32` or `custom:p,e`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fp16" | "half" => Ok(FloatFormat::FP16),
            "bf16" | "bfloat16" => Ok(FloatFormat::BF16),
            "fp32" | "single" => Ok(FloatFormat::FP32),
            _ => {
                let spec = s
                    .strip_prefix("custom:")
                    .ok_or_else(|| EmuError::InvalidFormat(format!("unknown format '{s}'")))?;
                let (p, e) = spec
                    .split_once(',')
                    .ok_or_else(|| EmuError::InvalidFormat(format!("expected custom:p,e, got '{s}'")))?;
                let parse = |v: &str| {
                    v.trim()
                        .parse::<u32>()
                        .map_err(|_| EmuError::InvalidFormat(format!("bad integer '{v}' in '{s}'")))
                };
                FloatFormat::new(parse(p)?, parse(e)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RoundingMode {
    NearestEven,
    Stochastic,
}

impl RoundingMode {
    /// Largest possible `|delta|` in units of `u`: 1 for nearest, 2 for stochastic.
    pub fn delta_factor(&self) -> u32 {
        match self {
            RoundingMode::NearestEven => 1,
            RoundingMode::Stochastic => 2,
        }
    }
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RoundingMode::NearestEven => write!(f, "rn"),
            RoundingMode::Stochastic => write!(f, "sr"),
        }
    }
}

impl FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rn" | "nearest" => Ok(RoundingMode::NearestEven),
            "sr" | "stochastic" => Ok(RoundingMode::Stochastic),
            _ => Err(format!("unknown rounding mode '{s}' (expected rn or sr)")),
        }
    }
}

/// The enclosing members `lo <= x <= hi`; `lo == hi` iff `x` is a member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeighborPair<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> NeighborPair<T> {
    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }
}

/// Bracket of a nonnegative magnitude, in units of the local quantum.
struct Bracket<T> {
    lo: T,
    hi: T,
    /// `(mag - lo) / quantum`, exact.
    frac: T,
    lo_even: bool,
}

fn bracket_magnitude<T: Scalar>(mag: T, fmt: &FloatFormat) -> Bracket<T> {
    let e = mag.binade();
    let emin = fmt.emin();
    let q = if e < emin && !fmt.subnormals {
        // Only 0 and 2^emin bracket the flushed range.
        emin
    } else {
        e.max(emin) - (fmt.precision as i32 - 1)
    };
    let scaled = mag.ldexp(-q);
    let fl = scaled.floor();
    let half = T::cast(0.5);
    Bracket {
        lo: fl.ldexp(q),
        hi: (fl + T::one()).ldexp(q),
        frac: scaled - fl,
        lo_even: (fl * half).floor() == fl * half,
    }
}

fn check_input<T: Scalar>(x: T, fmt: &FloatFormat) -> Result<(), EmuError> {
    debug_assert!(fmt.fits_carrier::<T>(), "{fmt} does not fit the carrier");
    if !x.is_finite() {
        return Err(EmuError::NonFinite(x.to_f64().unwrap_or(f64::NAN)));
    }
    if x.abs() > fmt.max_finite::<T>() {
        return Err(EmuError::Overflow { value: x.to_f64().unwrap_or(f64::NAN), format: *fmt });
    }
    Ok(())
}

/// Largest member `<= x` and smallest member `>= x`.
pub fn neighbors<T: Scalar>(x: T, fmt: &FloatFormat) -> Result<NeighborPair<T>, EmuError> {
    check_input(x, fmt)?;
    if x == T::zero() {
        return Ok(NeighborPair { lo: x, hi: x });
    }
    let b = bracket_magnitude(x.abs(), fmt);
    if b.frac == T::zero() {
        return Ok(NeighborPair { lo: x, hi: x });
    }
    Ok(if x < T::zero() {
        NeighborPair { lo: -b.hi, hi: -b.lo }
    } else {
        NeighborPair { lo: b.lo, hi: b.hi }
    })
}

/// Result of one rounding together with the bracket it was chosen from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rounded<T> {
    pub value: T,
    pub pair: NeighborPair<T>,
}

/// Rounds `x` into `fmt` under `mode`. The RNG is only touched for
/// non-representable inputs under stochastic rounding (exactly one draw).
pub fn round_traced<T: Scalar, R: Rng + ?Sized>(
    x: T,
    fmt: &FloatFormat,
    mode: RoundingMode,
    rng: &mut R,
) -> Result<Rounded<T>, EmuError> {
    round_with(x, fmt, mode, || T::unit_draw(rng))
}

fn round_with<T: Scalar>(
    x: T,
    fmt: &FloatFormat,
    mode: RoundingMode,
    draw: impl FnOnce() -> T,
) -> Result<Rounded<T>, EmuError> {
    check_input(x, fmt)?;
    if x == T::zero() {
        return Ok(Rounded { value: x, pair: NeighborPair { lo: x, hi: x } });
    }
    let b = bracket_magnitude(x.abs(), fmt);
    if b.frac == T::zero() {
        return Ok(Rounded { value: x, pair: NeighborPair { lo: x, hi: x } });
    }
    let negative = x < T::zero();
    let pair = if negative {
        NeighborPair { lo: -b.hi, hi: -b.lo }
    } else {
        NeighborPair { lo: b.lo, hi: b.hi }
    };
    let value = match mode {
        RoundingMode::NearestEven => {
            let half = T::cast(0.5);
            let up = b.frac > half || (b.frac == half && !b.lo_even);
            let mag = if up { b.hi } else { b.lo };
            if negative {
                -mag
            } else {
                mag
            }
        }
        RoundingMode::Stochastic => {
            let p = (x - pair.lo) / (pair.hi - pair.lo);
            if draw() < p {
                pair.hi
            } else {
                pair.lo
            }
        }
    };
    Ok(Rounded { value, pair })
}

/// Round to nearest, ties to even.
pub fn round_nearest<T: Scalar>(x: T, fmt: &FloatFormat) -> Result<T, EmuError> {
    round_with(x, fmt, RoundingMode::NearestEven, T::zero).map(|r| r.value)
}

/// Stochastic rounding: `hi` with probability `(x - lo) / (hi - lo)`.
pub fn round_stochastic<T: Scalar, R: Rng + ?Sized>(
    x: T,
    fmt: &FloatFormat,
    rng: &mut R,
) -> Result<T, EmuError> {
    round_traced(x, fmt, RoundingMode::Stochastic, rng).map(|r| r.value)
}

pub fn round<T: Scalar, R: Rng + ?Sized>(
    x: T,
    fmt: &FloatFormat,
    mode: RoundingMode,
    rng: &mut R,
) -> Result<T, EmuError> {
    round_traced(x, fmt, mode, rng).map(|r| r.value)
}

/// Relative perturbation `(r - x) / x` of a rounded value `r`.
#[inline]
pub fn relative_perturbation<T: Scalar>(x: T, r: T) -> T {
    (r - x) / x
}

/// Interval `[a, b]` containing the relative perturbation of any rounding of `x`.
pub fn delta_bounds_from_pair<T: Scalar>(x: T, pair: &NeighborPair<T>) -> (T, T) {
    let a = relative_perturbation(x, pair.lo);
    let b = relative_perturbation(x, pair.hi);
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

pub fn delta_bounds<T: Scalar>(x: T, fmt: &FloatFormat) -> Result<(T, T), EmuError> {
    if x == T::zero() {
        return Err(EmuError::ZeroInput);
    }
    let pair = neighbors(x, fmt)?;
    Ok(delta_bounds_from_pair(x, &pair))
}
