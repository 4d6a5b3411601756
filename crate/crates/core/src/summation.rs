//! Recursive summation in an emulated format with a full per-step record.
//!
//! The computed partial sums follow `s_hat[1] = x[1]` and
//! `s_hat[k] = (s_hat[k-1] + x[k]) (1 + delta[k])`, where the pre-rounding
//! sum `r[k] = s_hat[k-1] + x[k]` is formed in the carrier and `delta[k]` is
//! measured against it. The reference partial sums `s[k]` are plain carrier
//! prefix sums.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fpemu::{self, EmuError, FloatFormat, RoundingMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SumError {
    #[error("cannot sum an empty vector")]
    EmptyInput,
    #[error("overflow at step {index}: {source}")]
    Overflow {
        index: usize,
        #[source]
        source: EmuError,
    },
    #[error("input {index} is not a member of {format}; pre-round the data first")]
    NotRepresentable { index: usize, format: FloatFormat },
    #[error("{0} does not embed exactly in the carrier type")]
    CarrierTooNarrow(FloatFormat),
}

/// One step of a recursive summation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step<T> {
    pub exact: T,
    pub computed: T,
    pub delta: T,
    pub delta_lo: T,
    pub delta_hi: T,
    pub subnormal: bool,
}

impl<T: Scalar> Step<T> {
    pub fn forward_error(&self) -> T {
        self.computed - self.exact
    }
}

/// Streaming recursive summation; one call to [`push`](Self::push) per addend.
pub struct RecursiveSummer<'r, T, R: ?Sized> {
    format: FloatFormat,
    mode: RoundingMode,
    rng: &'r mut R,
    exact: T,
    computed: T,
    len: usize,
}

impl<'r, T: Scalar, R: Rng + ?Sized> RecursiveSummer<'r, T, R> {
    pub fn new(format: FloatFormat, mode: RoundingMode, rng: &'r mut R) -> Self {
        RecursiveSummer { format, mode, rng, exact: T::zero(), computed: T::zero(), len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Adds `x`, which must already be a member of the format.
    pub fn push(&mut self, x: T) -> Result<Step<T>, EmuError> {
        let zero = T::zero();
        self.len += 1;
        if self.len == 1 {
            self.exact = x;
            self.computed = x;
            return Ok(Step {
                exact: x,
                computed: x,
                delta: zero,
                delta_lo: zero,
                delta_hi: zero,
                subnormal: self.format.is_subnormal(x),
            });
        }
        let pre = self.computed + x;
        self.exact = self.exact + x;
        let (computed, delta, delta_lo, delta_hi) = if pre == zero {
            (pre, zero, zero, zero)
        } else {
            let rounded = fpemu::round_traced(pre, &self.format, self.mode, self.rng)?;
            let (a, b) = fpemu::delta_bounds_from_pair(pre, &rounded.pair);
            (rounded.value, fpemu::relative_perturbation(pre, rounded.value), a, b)
        };
        self.computed = computed;
        Ok(Step {
            exact: self.exact,
            computed,
            delta,
            delta_lo,
            delta_hi,
            subnormal: self.format.is_subnormal(computed),
        })
    }
}

/// Complete record of one recursive summation. Index `i` holds step `k = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummationTrace<T> {
    pub data: Vec<T>,
    pub exact_partial: Vec<T>,
    pub computed_partial: Vec<T>,
    pub delta: Vec<T>,
    pub delta_lo: Vec<T>,
    pub delta_hi: Vec<T>,
    pub forward_error: Vec<T>,
    pub format: FloatFormat,
    pub mode: RoundingMode,
    pub seed: u64,
    /// Number of computed partial sums that landed in the subnormal range.
    pub subnormal_results: usize,
}

impl<T: Scalar> SummationTrace<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn final_error(&self) -> T {
        *self.forward_error.last().expect("trace is nonempty")
    }

    /// `||[s_2, ..., s_n]||_2`.
    pub fn partial_sum_norm(&self) -> T {
        self.exact_partial
            .iter()
            .skip(1)
            .fold(T::zero(), |acc, &s| acc + s * s)
            .sqrt()
    }

    pub fn abs_data_sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &x| acc + x.abs())
    }
}

/// Rounds every element to nearest-even in `fmt`.
pub fn pre_round<T: Scalar>(data: &[T], fmt: &FloatFormat) -> Result<Vec<T>, SumError> {
    data.iter()
        .enumerate()
        .map(|(index, &x)| {
            fpemu::round_nearest(x, fmt).map_err(|source| SumError::Overflow { index, source })
        })
        .collect()
}

/// Recursive summation of pre-rounded `data`, stochastic draws seeded by `seed`.
pub fn recursive_sum<T: Scalar>(
    data: &[T],
    fmt: &FloatFormat,
    mode: RoundingMode,
    seed: u64,
) -> Result<SummationTrace<T>, SumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = recursive_sum_with_rng(data, fmt, mode, &mut rng)?;
    trace.seed = seed;
    Ok(trace)
}

/// As [`recursive_sum`] but drawing from a caller-provided stream.
/// The returned trace records seed 0.
pub fn recursive_sum_with_rng<T: Scalar, R: Rng + ?Sized>(
    data: &[T],
    fmt: &FloatFormat,
    mode: RoundingMode,
    rng: &mut R,
) -> Result<SummationTrace<T>, SumError> {
    if data.is_empty() {
        return Err(SumError::EmptyInput);
    }
    if !fmt.fits_carrier::<T>() {
        return Err(SumError::CarrierTooNarrow(*fmt));
    }
    for (index, &x) in data.iter().enumerate() {
        let pair = fpemu::neighbors(x, fmt).map_err(|source| SumError::Overflow { index, source })?;
        if !pair.is_exact() {
            return Err(SumError::NotRepresentable { index, format: *fmt });
        }
    }

    let n = data.len();
    let mut trace = SummationTrace {
        data: data.to_vec(),
        exact_partial: Vec::with_capacity(n),
        computed_partial: Vec::with_capacity(n),
        delta: Vec::with_capacity(n),
        delta_lo: Vec::with_capacity(n),
        delta_hi: Vec::with_capacity(n),
        forward_error: Vec::with_capacity(n),
        format: *fmt,
        mode,
        seed: 0,
        subnormal_results: 0,
    };
    let mut summer = RecursiveSummer::new(*fmt, mode, rng);
    for (index, &x) in data.iter().enumerate() {
        let step = summer.push(x).map_err(|source| SumError::Overflow { index, source })?;
        trace.exact_partial.push(step.exact);
        trace.computed_partial.push(step.computed);
        trace.delta.push(step.delta);
        trace.delta_lo.push(step.delta_lo);
        trace.delta_hi.push(step.delta_hi);
        trace.forward_error.push(step.forward_error());
        trace.subnormal_results += step.subnormal as usize;
    }
    Ok(trace)
}

/// Largest scaled residual of the forward-error identity
/// `E_k = sum_{i=2}^k s_i delta_i prod_{j=i+1}^k (1 + delta_j)`,
/// i.e. `max_k |rhs_k - E_k| / (1 + |s_k|)`.
pub fn check_error_identity<T: Scalar>(trace: &SummationTrace<T>) -> T {
    let one = T::one();
    let mut rhs = T::zero();
    let mut worst = T::zero();
    for k in 1..trace.len() {
        // Horner form of the sum: each earlier term picks up (1 + delta_k).
        rhs = rhs * (one + trace.delta[k]) + trace.exact_partial[k] * trace.delta[k];
        let residual = (rhs - trace.forward_error[k]).abs() / (one + trace.exact_partial[k].abs());
        worst = worst.max(residual);
    }
    worst
}

/// Running products `P_k = prod_{i=1}^k (1 + delta_i)`.
pub fn product_trajectory<T: Scalar>(trace: &SummationTrace<T>) -> Vec<T> {
    trace
        .delta
        .iter()
        .scan(T::one(), |acc, &d| {
            *acc = *acc * (T::one() + d);
            Some(*acc)
        })
        .collect()
}
