//! Seeded Monte Carlo campaigns over a grid of problem sizes.
//!
//! Every `(n, trial)` pair draws its data and its stochastic-rounding stream
//! from seeds derived from the master seed, so a campaign is reproducible
//! regardless of how trials are scheduled. Trials run in parallel and are
//! reduced in `(n-index, trial-index)` order.

mod csv;
mod stats;

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{self, BoundInputs, BoundsError};
use crate::fpemu::{self, EmuError, FloatFormat, RoundingMode};
use crate::scalar::Scalar;
use crate::summation::RecursiveSummer;

pub use csv::{emit_csv, parse_csv, write_trace_csv};
pub use stats::{log_grid, ls_slope, percentiles};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no values to aggregate")]
    EmptyInput,
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Which campaign to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Figure {
    /// `|E_n|` against the a priori bounds.
    ErrorBounds,
    /// `prod (1 + delta_i)` against its envelope.
    ProductGrowth,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::ErrorBounds => "error-bounds",
            Figure::ProductGrowth => "product-growth",
        })
    }
}

impl FromStr for Figure {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "error-bounds" => Ok(Figure::ErrorBounds),
            "product-growth" => Ok(Figure::ProductGrowth),
            other => Err(ExperimentError::Config(format!(
                "unknown figure '{other}' (expected error-bounds or product-growth)"
            ))),
        }
    }
}

/// Uniform data on `[lo, hi]`, so `mu_x = (lo + hi) / 2` and `C_x = (hi - lo) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    lo: f64,
    hi: f64,
}

impl DataSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, ExperimentError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(ExperimentError::Config(format!("uniform bounds need lo < hi, got [{lo}, {hi}]")));
        }
        Ok(DataSpec { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn mu_x(&self) -> f64 {
        0.5 * self.lo + 0.5 * self.hi
    }

    pub fn c_x(&self) -> f64 {
        0.5 * self.hi - 0.5 * self.lo
    }

    /// Largest magnitude in the support.
    pub fn max_abs(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    fn sampler<T: Scalar>(&self) -> Uniform<T> {
        Uniform::new_inclusive(T::cast(self.lo), T::cast(self.hi)).expect("validated bounds")
    }
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec { lo: -1.0, hi: 1.0 }
    }
}

impl fmt::Display for DataSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "uniform:{},{}", self.lo, self.hi)
    }
}

impl FromStr for DataSpec {
    type Err = ExperimentError;

    /// Parses `uniform:lo,hi`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ExperimentError::Config(format!("expected uniform:lo,hi, got '{s}'"));
        let body = s.strip_prefix("uniform:").ok_or_else(bad)?;
        let (lo, hi) = body.split_once(',').ok_or_else(bad)?;
        let lo = lo.trim().parse::<f64>().map_err(|_| bad())?;
        let hi = hi.trim().parse::<f64>().map_err(|_| bad())?;
        DataSpec::uniform(lo, hi)
    }
}

/// `n` independent samples from `spec`, reproducible from `seed`.
pub fn generate_data<T: Scalar>(spec: &DataSpec, n: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.sampler::<T>().sample_iter(&mut rng).take(n).collect()
}

/// Seed streams drawn per `(n, trial)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Data = 0,
    Rounding = 1,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one stream of one trial; a pure function of its arguments.
pub fn derive_seed(master: u64, n_index: usize, trial: usize, stream: SeedStream) -> u64 {
    let mut h = splitmix64(master);
    for word in [n_index as u64, trial as u64, stream as u64] {
        h = splitmix64(h ^ word);
    }
    h
}

/// Default upper end of the size grid: `u^-2`, kept within `[3e5, 1e7]`.
pub fn default_nmax(format: &FloatFormat) -> usize {
    let u: f64 = format.unit_roundoff();
    (1.0 / (u * u)).clamp(3e5, 1e7).round() as usize
}

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_NMIN: usize = 10;
pub const DEFAULT_POINTS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub figure: Figure,
    pub format: FloatFormat,
    pub mode: RoundingMode,
    pub trials: usize,
    pub n_grid: Vec<usize>,
    pub delta: f64,
    pub data: DataSpec,
    pub master_seed: u64,
    /// Adds `lambda = 1` trend curves (and bound/median ratios) to each row.
    pub extended: bool,
}

impl ExperimentConfig {
    /// Defaults: 50 trials, `delta = 0.05`, uniform `[-1, 1]` data and 30
    /// log-spaced sizes from 10 to [`default_nmax`].
    pub fn new(figure: Figure, format: FloatFormat, mode: RoundingMode) -> Self {
        let n_grid = log_grid(DEFAULT_NMIN, default_nmax(&format), DEFAULT_POINTS).expect("default grid");
        ExperimentConfig {
            figure,
            format,
            mode,
            trials: DEFAULT_TRIALS,
            n_grid,
            delta: DEFAULT_DELTA,
            data: DataSpec::default(),
            master_seed: 0,
            extended: false,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_grid.first() == Some(&0) || !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!("n_grid must be positive and strictly increasing: {:?}", self.n_grid));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        Ok(())
    }
}

/// Per-row summary of one trial statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles<T> {
    pub p25: T,
    pub p50: T,
    pub p75: T,
    pub max: T,
}

/// Bound curves for the error campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorCurves<T> {
    pub thm51: T,
    pub thm52: T,
    pub classical: T,
    pub violations_thm51: usize,
    pub violations_thm52: usize,
    pub trend: Option<ErrorTrend<T>>,
}

/// The same bounds with `lambda = 1`, and how far the rigorous bound sits
/// above the median error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorTrend<T> {
    pub thm51_lambda1: T,
    pub thm52_lambda1: T,
    pub ratio_thm51_p50: T,
}

/// Envelope `[1 - g, 1 + g]` for the product campaign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductCurves<T> {
    pub env_lo: T,
    pub env_hi: T,
    pub violations_env: usize,
    /// The envelope with `lambda = 1`.
    pub trend: Option<(T, T)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curves<T> {
    Error(ErrorCurves<T>),
    Product(ProductCurves<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow<T> {
    pub n: usize,
    pub stats: Quartiles<T>,
    pub curves: Curves<T>,
    pub trials: usize,
    pub failed_trials: usize,
}

impl<T> SeriesRow<T> {
    /// Violations of the primary curve (the mean-independent bound or the envelope).
    pub fn primary_violations(&self) -> usize {
        match &self.curves {
            Curves::Error(c) => c.violations_thm51,
            Curves::Product(c) => c.violations_env,
        }
    }

    pub fn total_violations(&self) -> usize {
        match &self.curves {
            Curves::Error(c) => c.violations_thm51 + c.violations_thm52,
            Curves::Product(c) => c.violations_env,
        }
    }
}

/// A trial that could not be completed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFailure {
    pub n: usize,
    pub trial: usize,
    /// Zero-based step at which the failure occurred.
    pub index: usize,
    pub error: EmuError,
}

impl fmt::Display for TrialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n = {}, trial {}, step {}: {}", self.n, self.trial, self.index, self.error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable<T> {
    pub figure: Figure,
    pub extended: bool,
    pub rows: Vec<SeriesRow<T>>,
    /// Failed trials in `(n, trial)` order. Not serialized.
    pub failures: Vec<TrialFailure>,
}

impl<T> SeriesTable<T> {
    pub fn total_violations(&self) -> usize {
        self.rows.iter().map(SeriesRow::total_violations).sum()
    }

    pub fn total_failed(&self) -> usize {
        self.rows.iter().map(|r| r.failed_trials).sum()
    }
}

/// Final values of one streamed summation.
#[derive(Debug, Clone, Copy)]
struct TrialOutcome<T> {
    abs_error: T,
    product: T,
}

/// Sums `n` fresh samples through the emulated format without storing the
/// trace. Matches `recursive_sum(pre_round(generate_data(..)))` exactly.
fn run_trial<T: Scalar>(cfg: &ExperimentConfig, n_index: usize, n: usize, trial: usize) -> Result<TrialOutcome<T>, TrialFailure> {
    let fail = |index, error| TrialFailure { n, trial, index, error };
    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, n_index, trial, SeedStream::Data));
    let mut round_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.master_seed, n_index, trial, SeedStream::Rounding));
    let mut summer = RecursiveSummer::new(cfg.format, cfg.mode, &mut round_rng);
    let mut samples = cfg.data.sampler::<T>().sample_iter(&mut data_rng);
    let mut product = T::one();
    let mut abs_error = T::zero();
    for index in 0..n {
        let raw = samples.next().expect("endless sampler");
        let x = fpemu::round_nearest(raw, &cfg.format).map_err(|e| fail(index, e))?;
        let step = summer.push(x).map_err(|e| fail(index, e))?;
        product = product * (T::one() + step.delta);
        abs_error = step.forward_error().abs();
    }
    Ok(TrialOutcome { abs_error, product })
}

struct RowRun<T> {
    outcomes: Vec<TrialOutcome<T>>,
    failures: Vec<TrialFailure>,
}

fn run_row<T: Scalar>(cfg: &ExperimentConfig, n_index: usize, n: usize) -> RowRun<T> {
    let results: Vec<_> = (0..cfg.trials).into_par_iter().map(|t| run_trial::<T>(cfg, n_index, n, t)).collect();
    let mut run = RowRun { outcomes: Vec::with_capacity(results.len()), failures: Vec::new() };
    for r in results {
        match r {
            Ok(o) => run.outcomes.push(o),
            Err(f) => run.failures.push(f),
        }
    }
    run
}

fn quartiles<T: Scalar>(values: &[T]) -> Quartiles<T> {
    if values.is_empty() {
        let nan = T::nan();
        return Quartiles { p25: nan, p50: nan, p75: nan, max: nan };
    }
    let q = percentiles(values, &[T::cast(0.25), T::cast(0.5), T::cast(0.75), T::one()]).expect("valid quantiles");
    Quartiles { p25: q[0], p50: q[1], p75: q[2], max: q[3] }
}

fn check_figure<T: Scalar>(cfg: &ExperimentConfig, want: Figure) -> Result<(), ExperimentError> {
    cfg.validate()?;
    if cfg.figure != want {
        return Err(ExperimentError::Config(format!("configuration is for {}, not {want}", cfg.figure)));
    }
    if !cfg.format.fits_carrier::<T>() {
        return Err(ExperimentError::Config(format!("{} does not embed in the carrier type", cfg.format)));
    }
    Ok(())
}

/// Bound inputs for a row of size `n >= 2`; `doubled` applies `u <- 2u`.
fn row_inputs<T: Scalar>(cfg: &ExperimentConfig, n: usize, doubled: bool) -> BoundInputs<T> {
    let inputs = BoundInputs::new(n, cfg.format.unit_roundoff::<T>(), T::cast(cfg.delta))
        .with_data(T::cast(cfg.data.mu_x()), T::cast(cfg.data.c_x()));
    if doubled {
        inputs.with_stochastic_substitution()
    } else {
        inputs
    }
}

fn error_curves<T: Scalar>(cfg: &ExperimentConfig, n: usize, stats: &Quartiles<T>) -> Result<ErrorCurves<T>, ExperimentError> {
    let zero = T::zero();
    let stochastic = cfg.mode == RoundingMode::Stochastic;
    if n < 2 {
        let trend = cfg.extended.then(|| ErrorTrend { thm51_lambda1: zero, thm52_lambda1: zero, ratio_thm51_p50: T::nan() });
        return Ok(ErrorCurves { thm51: zero, thm52: zero, classical: zero, violations_thm51: 0, violations_thm52: 0, trend });
    }
    let nominal = row_inputs::<T>(cfg, n, false);
    let independent = row_inputs::<T>(cfg, n, stochastic);
    let thm51 = bounds::bound_thm51(&nominal)?.value;
    let thm52 = bounds::bound_thm52(&independent)?.value;
    let abs_sum = T::count(n) * T::cast(cfg.data.max_abs());
    let classical = bounds::classical_bound(n, independent.u, abs_sum)?.value;
    let trend = if cfg.extended {
        let thm51_lambda1 = bounds::bound_thm51_with_lambda(&nominal, T::one())?.value;
        Some(ErrorTrend {
            thm51_lambda1,
            thm52_lambda1: bounds::bound_thm52_with_lambda(&independent, T::one())?.value,
            ratio_thm51_p50: thm51 / stats.p50,
        })
    } else {
        None
    };
    Ok(ErrorCurves { thm51, thm52, classical, violations_thm51: 0, violations_thm52: 0, trend })
}

/// `|E_n|` percentiles per size with the a priori bounds attached.
///
/// The mean-independent bound uses the nominal `u` in both modes; the
/// independent-error bound and the classical bound use `2u` under stochastic
/// rounding. The classical curve takes `sum |x_i| <= n max(|lo|, |hi|)`.
pub fn run_error_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<SeriesTable<T>, ExperimentError> {
    check_figure::<T>(cfg, Figure::ErrorBounds)?;
    let mut table = SeriesTable { figure: Figure::ErrorBounds, extended: cfg.extended, rows: Vec::new(), failures: Vec::new() };
    for (n_index, &n) in cfg.n_grid.iter().enumerate() {
        let run = run_row::<T>(cfg, n_index, n);
        let errors: Vec<T> = run.outcomes.iter().map(|o| o.abs_error).collect();
        let stats = quartiles(&errors);
        let mut curves = error_curves(cfg, n, &stats)?;
        curves.violations_thm51 = errors.iter().filter(|&&e| e > curves.thm51).count();
        curves.violations_thm52 = errors.iter().filter(|&&e| e > curves.thm52).count();
        table.rows.push(SeriesRow {
            n,
            stats,
            curves: Curves::Error(curves),
            trials: cfg.trials,
            failed_trials: run.failures.len(),
        });
        table.failures.extend(run.failures);
    }
    Ok(table)
}

/// `prod (1 + delta_i)` percentiles per size against `1 +- gamma~_n(delta)`,
/// with `u <- 2u` under stochastic rounding.
pub fn run_product_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<SeriesTable<T>, ExperimentError> {
    check_figure::<T>(cfg, Figure::ProductGrowth)?;
    let mut u = cfg.format.unit_roundoff::<T>();
    if cfg.mode == RoundingMode::Stochastic {
        u = u + u;
    }
    let delta = T::cast(cfg.delta);
    let mut table = SeriesTable { figure: Figure::ProductGrowth, extended: cfg.extended, rows: Vec::new(), failures: Vec::new() };
    for (n_index, &n) in cfg.n_grid.iter().enumerate() {
        let run = run_row::<T>(cfg, n_index, n);
        let products: Vec<T> = run.outcomes.iter().map(|o| o.product).collect();
        let (env_lo, env_hi) = bounds::product_envelope(n, delta, u)?;
        let trend = cfg.extended.then(|| {
            let g = bounds::gamma_tilde_with_lambda(n, T::one(), u);
            (T::one() - g, T::one() + g)
        });
        let violations_env = products.iter().filter(|&&p| p < env_lo || p > env_hi).count();
        table.rows.push(SeriesRow {
            n,
            stats: quartiles(&products),
            curves: Curves::Product(ProductCurves { env_lo, env_hi, violations_env, trend }),
            trials: cfg.trials,
            failed_trials: run.failures.len(),
        });
        table.failures.extend(run.failures);
    }
    Ok(table)
}

/// Dispatches on `cfg.figure`.
pub fn run_experiment<T: Scalar>(cfg: &ExperimentConfig) -> Result<SeriesTable<T>, ExperimentError> {
    match cfg.figure {
        Figure::ErrorBounds => run_error_experiment(cfg),
        Figure::ProductGrowth => run_product_experiment(cfg),
    }
}
