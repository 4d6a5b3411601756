//! Order-by-order expansion of the forward error.
//!
//! Viewed as a polynomial in the perturbations `delta_2..delta_n`, the
//! forward error splits as `E_n = sum_j S_n^(j)` where `S_k^(j)` collects
//! the monomials of total degree `j`. They obey
//!
//! ```text
//! S_1^(j) = 0
//! S_k^(1) = S_{k-1}^(1) + delta_k s_k
//! S_k^(j) = S_{k-1}^(j) + delta_k S_{k-1}^(j-1)      (j > 1)
//! ```
//!
//! and `S_k^(j) = 0` whenever `j >= k`.

use thiserror::Error;

use crate::scalar::Scalar;
use crate::summation::SummationTrace;

/// Largest trace length accepted by [`brute_force_orders`].
pub const BRUTE_FORCE_MAX_LEN: usize = 20;

/// Default truncation order for long traces.
pub const DEFAULT_MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecompError {
    #[error("max_order {max_order} outside 1..={limit}")]
    OrderRange { max_order: usize, limit: usize },
    #[error("brute-force expansion limited to n <= {BRUTE_FORCE_MAX_LEN}, got {0}")]
    Size(usize),
}

/// Dense table of `S_k^(j)` for `k = 1..=n`, `j = 1..=max_order`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderDecomposition<T> {
    n: usize,
    max_order: usize,
    terms: Vec<T>,
}

impl<T: Scalar> OrderDecomposition<T> {
    fn zeros(n: usize, max_order: usize) -> Self {
        OrderDecomposition { n, max_order, terms: vec![T::zero(); n * max_order] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `S_k^(j)`, one-based in both indices.
    pub fn get(&self, k: usize, j: usize) -> T {
        assert!((1..=self.n).contains(&k) && (1..=self.max_order).contains(&j));
        self.terms[(k - 1) * self.max_order + (j - 1)]
    }

    fn slot(&mut self, k: usize, j: usize) -> &mut T {
        &mut self.terms[(k - 1) * self.max_order + (j - 1)]
    }

    /// `S_k^(1..=max_order)` as a slice.
    pub fn row(&self, k: usize) -> &[T] {
        &self.terms[(k - 1) * self.max_order..k * self.max_order]
    }

    /// Sum of all stored orders at step `k`.
    pub fn order_sum(&self, k: usize) -> T {
        self.row(k).iter().fold(T::zero(), |acc, &v| acc + v)
    }
}

/// Evaluates the order recurrences up to `max_order`.
pub fn decompose<T: Scalar>(
    trace: &SummationTrace<T>,
    max_order: usize,
) -> Result<OrderDecomposition<T>, DecompError> {
    let n = trace.len();
    let limit = n.saturating_sub(1);
    if max_order == 0 || max_order > limit {
        return Err(DecompError::OrderRange { max_order, limit });
    }
    let mut dec = OrderDecomposition::zeros(n, max_order);
    for k in 2..=n {
        let delta = trace.delta[k - 1];
        let first = dec.get(k - 1, 1) + delta * trace.exact_partial[k - 1];
        *dec.slot(k, 1) = first;
        for j in 2..=max_order {
            let v = dec.get(k - 1, j) + delta * dec.get(k - 1, j - 1);
            *dec.slot(k, j) = v;
        }
    }
    Ok(dec)
}

/// Expands `sum_{i=2}^k s_i delta_i prod_{l=i+1}^k (1 + delta_l)` monomial
/// by monomial for every prefix length `k`, binning by degree.
pub fn brute_force_orders<T: Scalar>(trace: &SummationTrace<T>) -> Result<OrderDecomposition<T>, DecompError> {
    let n = trace.len();
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(DecompError::Size(n));
    }
    let mut dec = OrderDecomposition::zeros(n, n.saturating_sub(1));
    for k in 2..=n {
        for i in 2..=k {
            let base = trace.exact_partial[i - 1] * trace.delta[i - 1];
            // Bit b of the mask selects delta_{i+1+b}.
            let free = k - i;
            for mask in 0u32..(1u32 << free) {
                let mut monomial = base;
                for b in 0..free {
                    if mask & (1 << b) != 0 {
                        monomial = monomial * trace.delta[i + b];
                    }
                }
                let order = 1 + mask.count_ones() as usize;
                *dec.slot(k, order) = dec.get(k, order) + monomial;
            }
        }
    }
    Ok(dec)
}

/// Largest absolute residual of the unrolled identities
/// `S_k^(1) = sum_{i=2}^k delta_i s_i` and
/// `S_k^(j) = sum_{i=2}^k delta_i S_{i-1}^(j-1)`.
pub fn check_hockey_stick<T: Scalar>(dec: &OrderDecomposition<T>, trace: &SummationTrace<T>) -> T {
    let mut worst = T::zero();
    for j in 1..=dec.max_order() {
        let mut acc = T::zero();
        for k in 2..=dec.n() {
            let delta = trace.delta[k - 1];
            let lower = if j == 1 { trace.exact_partial[k - 1] } else { dec.get(k - 1, j - 1) };
            acc = acc + delta * lower;
            worst = worst.max((acc - dec.get(k, j)).abs());
        }
    }
    worst
}
