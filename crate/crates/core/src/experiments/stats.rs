//! Sample statistics and grids for the Monte Carlo campaigns.

use std::cmp::Ordering;

use crate::scalar::Scalar;

use super::ExperimentError;

/// Type-7 quantiles: `h = q (n - 1)`, linear interpolation between order
/// statistics.
pub fn percentiles<T: Scalar>(values: &[T], qs: &[T]) -> Result<Vec<T>, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    qs.iter().map(|&q| quantile_sorted(&sorted, q)).collect()
}

pub(crate) fn quantile_sorted<T: Scalar>(sorted: &[T], q: T) -> Result<T, ExperimentError> {
    if !(q >= T::zero() && q <= T::one()) {
        return Err(ExperimentError::Config(format!("quantile {q} outside [0, 1]")));
    }
    let h = q * T::count(sorted.len() - 1);
    let lo = h.floor();
    let i = lo.to_usize().unwrap_or(0);
    if i + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    Ok(sorted[i] + (h - lo) * (sorted[i + 1] - sorted[i]))
}

/// `points` integers from `nmin` to `nmax`, evenly spaced in `log n`,
/// rounded and nudged up where rounding would repeat a value.
pub fn log_grid(nmin: usize, nmax: usize, points: usize) -> Result<Vec<usize>, ExperimentError> {
    if nmin == 0 || nmax < nmin || points == 0 {
        return Err(ExperimentError::Config(format!(
            "grid needs 1 <= nmin <= nmax and points >= 1 (got {nmin}, {nmax}, {points})"
        )));
    }
    if points == 1 {
        return Ok(vec![nmin]);
    }
    if nmax - nmin + 1 < points {
        return Err(ExperimentError::Config(format!(
            "cannot place {points} distinct sizes in [{nmin}, {nmax}]"
        )));
    }
    let (a, b) = ((nmin as f64).ln(), (nmax as f64).ln());
    let step = (b - a) / (points - 1) as f64;
    let mut grid = Vec::with_capacity(points);
    for i in 0..points {
        let room = nmax - (points - 1 - i);
        let raw = if i + 1 == points { nmax } else { (a + step * i as f64).exp().round() as usize };
        let floor = grid.last().map_or(nmin, |&p: &usize| p + 1);
        grid.push(raw.clamp(floor, room));
    }
    Ok(grid)
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
