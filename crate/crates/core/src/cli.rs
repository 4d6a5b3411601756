//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage errors (unknown or missing flags,
//! out-of-domain parameters), 2 for runtime failures (overflow, I/O).

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bounds::{self, BoundInputs, BoundValue};
use crate::experiments::{self, DataSpec, ExperimentConfig, Figure};
use crate::fpemu::{FloatFormat, RoundingMode};
use crate::summation::{self, SummationTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "PROBSUM_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "probsum",
    version,
    about = "Emulated low-precision summation with probabilistic error bounds",
    after_help = "Seeds default to $PROBSUM_SEED when set, else 0. Exit codes: 0 ok, 1 usage error, 2 runtime error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sum random data once and compare the error with the bounds
    Sum(SumArgs),
    /// Evaluate one bound or intermediate quantity
    Bounds(BoundsArgs),
    /// Run a Monte Carlo campaign and write its CSV table
    Experiment(ExperimentArgs),
    /// Problem size at which lambda * sqrt(n) * u reaches 1
    Crossover(CrossoverArgs),
}

#[derive(Debug, Args)]
struct SumArgs {
    /// Emulated format: fp16, bf16, fp32 or custom:p,e
    #[arg(long)]
    format: FloatFormat,
    /// Rounding mode: rn (nearest-even) or sr (stochastic)
    #[arg(long)]
    rounding: RoundingMode,
    /// Number of terms
    #[arg(long)]
    n: usize,
    /// Data distribution
    #[arg(long, default_value = "uniform:-1,1")]
    dist: DataSpec,
    /// Seed for data and rounding [default: $PROBSUM_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Failure probability used for the bounds
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Write the per-step trace as CSV to this path
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Quantity {
    Lambda,
    GammaTilde,
    Kappa,
    Sbound,
    Thm33,
    Thm41,
    Thm51,
    Thm52,
    Classical,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Quantity to evaluate
    #[arg(long, value_enum)]
    theorem: Quantity,
    /// Problem size
    #[arg(long)]
    n: Option<usize>,
    /// Unit roundoff
    #[arg(long, conflicts_with = "format")]
    u: Option<f64>,
    /// Take the unit roundoff from a format: fp16, bf16, fp32 or custom:p,e
    #[arg(long)]
    format: Option<FloatFormat>,
    /// Failure probability
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    /// Data mean
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Data half-width, |x - mu| <= cx
    #[arg(long)]
    cx: Option<f64>,
    /// Partial-sum norm ||[s_2, ..., s_n]||_2
    #[arg(long)]
    snorm: Option<f64>,
    /// Sum of |x_i| (classical bound)
    #[arg(long)]
    abs_sum: Option<f64>,
    /// Rounding mode; sr doubles u where independent errors are assumed
    #[arg(long, default_value = "rn")]
    rounding: RoundingMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FigureArg {
    ErrorBounds,
    ProductGrowth,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Campaign to run
    #[arg(long, value_enum)]
    figure: FigureArg,
    /// Emulated format: fp16, bf16, fp32 or custom:p,e
    #[arg(long)]
    format: FloatFormat,
    /// Rounding mode: rn or sr
    #[arg(long)]
    rounding: RoundingMode,
    /// Trials per problem size
    #[arg(long, default_value_t = experiments::DEFAULT_TRIALS)]
    trials: usize,
    /// Failure probability
    #[arg(long, default_value_t = experiments::DEFAULT_DELTA)]
    delta: f64,
    /// Smallest problem size
    #[arg(long, default_value_t = experiments::DEFAULT_NMIN)]
    nmin: usize,
    /// Largest problem size [default: u^-2 clamped to [3e5, 1e7]]
    #[arg(long)]
    nmax: Option<usize>,
    /// Number of log-spaced sizes
    #[arg(long, default_value_t = experiments::DEFAULT_POINTS)]
    points: usize,
    /// Data distribution
    #[arg(long, default_value = "uniform:-1,1")]
    dist: DataSpec,
    /// Master seed [default: $PROBSUM_SEED or 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; CSV goes to stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add lambda = 1 trend columns and bound/median ratios
    #[arg(long)]
    extended: bool,
}

#[derive(Debug, Args)]
struct CrossoverArgs {
    /// Value of lambda
    #[arg(long, default_value_t = 9.0)]
    lambda: f64,
    /// Emulated format: fp16, bf16, fp32 or custom:p,e
    #[arg(long, required_unless_present = "u")]
    format: Option<FloatFormat>,
    /// Unit roundoff
    #[arg(long, conflicts_with = "format")]
    u: Option<f64>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(format!("I/O error: {e}"))
    }
}

impl From<bounds::BoundsError> for Failure {
    fn from(e: bounds::BoundsError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<experiments::ExperimentError> for Failure {
    fn from(e: experiments::ExperimentError) -> Self {
        use experiments::ExperimentError as E;
        match e {
            E::Config(_) | E::Bounds(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, A>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        Command::Sum(a) => cmd_sum(a, stdout),
        Command::Bounds(a) => cmd_bounds(a, stdout),
        Command::Experiment(a) => cmd_experiment(a, stdout, stderr),
        Command::Crossover(a) => cmd_crossover(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message());
            f.code()
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{SEED_ENV}='{v}' is not a 64-bit unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn bound_line(out: &mut dyn Write, name: &str, b: &BoundValue<f64>, u: f64) -> io::Result<()> {
    let flag = if b.informative { "" } else { " (uninformative)" };
    writeln!(out, "bound_{name}: {} [u = {}, {}]{flag}", num(b.value), num(u), b.effective_u_note)
}

fn cmd_sum(a: SumArgs, out: &mut dyn Write) -> CmdResult {
    if a.n == 0 {
        return Err(Failure::Usage("--n must be at least 1".into()));
    }
    let seed = resolve_seed(a.seed)?;
    let raw: Vec<f64> = experiments::generate_data(&a.dist, a.n, seed);
    let data = summation::pre_round(&raw, &a.format).map_err(|e| Failure::Runtime(e.to_string()))?;
    let trace = summation::recursive_sum(&data, &a.format, a.rounding, seed).map_err(|e| match e {
        summation::SumError::Overflow { .. } => Failure::Runtime(e.to_string()),
        _ => Failure::Usage(e.to_string()),
    })?;

    let n = trace.len();
    let exact = trace.exact_partial[n - 1];
    let computed = trace.computed_partial[n - 1];
    let err = trace.final_error().abs();
    writeln!(out, "format: {}", a.format)?;
    writeln!(out, "rounding: {}", a.rounding)?;
    writeln!(out, "n: {n}")?;
    writeln!(out, "seed: {seed}")?;
    writeln!(out, "computed_sum: {}", num(computed))?;
    writeln!(out, "exact_sum: {}", num(exact))?;
    writeln!(out, "abs_error: {}", num(err))?;
    writeln!(out, "rel_error: {}", num(err / exact.abs()))?;
    write_sum_bounds(&a, &trace, out)?;

    if let Some(path) = &a.trace {
        write_atomically(path, |w| experiments::write_trace_csv(&trace, w).map(|_| ()).map_err(Failure::from))?;
        writeln!(out, "trace: {}", path.display())?;
    }
    Ok(())
}

fn write_sum_bounds(a: &SumArgs, trace: &SummationTrace<f64>, out: &mut dyn Write) -> CmdResult {
    let n = trace.len();
    writeln!(out, "delta: {}", num(a.delta))?;
    if n < 2 {
        writeln!(out, "bounds: not applicable for n = 1 (no rounding)")?;
        return Ok(());
    }
    let u: f64 = a.format.unit_roundoff();
    let sr = a.rounding == RoundingMode::Stochastic;
    let base = BoundInputs::new(n, u, a.delta)
        .with_data(a.dist.mu_x(), a.dist.c_x())
        .with_norm(trace.partial_sum_norm());
    base.validate()?;
    let independent = if sr { base.with_stochastic_substitution() } else { base };
    writeln!(out, "s_norm: {}", num(trace.partial_sum_norm()))?;
    bound_line(out, "thm33", &bounds::bound_thm33(&independent)?, independent.u)?;
    bound_line(out, "thm41", &bounds::bound_thm41(&base)?, base.u)?;
    bound_line(out, "thm51", &bounds::bound_thm51(&base)?, base.u)?;
    bound_line(out, "thm52", &bounds::bound_thm52(&independent)?, independent.u)?;
    let classical = bounds::classical_bound(n, independent.u, trace.abs_data_sum())?;
    bound_line(out, "classical", &classical, independent.u)?;
    Ok(())
}

fn require<T>(v: Option<T>, flag: &str, q: Quantity) -> Result<T, Failure> {
    let name = q.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default();
    v.ok_or_else(|| Failure::Usage(format!("--theorem {name} requires --{flag}")))
}

fn cmd_bounds(a: BoundsArgs, out: &mut dyn Write) -> CmdResult {
    let q = a.theorem;
    let sr = a.rounding == RoundingMode::Stochastic;
    let unit = |a: &BoundsArgs| -> Result<f64, Failure> {
        match (a.u, &a.format) {
            (Some(u), _) => Ok(u),
            (None, Some(f)) => Ok(f.unit_roundoff()),
            (None, None) => Err(Failure::Usage(format!(
                "--theorem {} requires --u or --format",
                q.to_possible_value().map(|p| p.get_name().to_string()).unwrap_or_default()
            ))),
        }
    };
    let delta = a.delta;
    writeln!(out, "theorem: {}", q.to_possible_value().expect("named").get_name())?;
    match q {
        Quantity::Lambda => {
            writeln!(out, "delta: {}", num(delta))?;
            writeln!(out, "value: {}", num(bounds::lambda(delta)?))?;
        }
        Quantity::GammaTilde => {
            let n = require(a.n, "n", q)?;
            let u = doubled(unit(&a)?, sr);
            writeln!(out, "lambda: {}", num(bounds::lambda(delta)?))?;
            writeln!(out, "effective_u: {}", num(u))?;
            writeln!(out, "value: {}", num(bounds::gamma_tilde(n, delta, u)?))?;
        }
        Quantity::Kappa => {
            let n = require(a.n, "n", q)?;
            let u = unit(&a)?;
            if n >= 2 {
                writeln!(out, "lambda: {}", num(bounds::lambda(delta / (n - 1) as f64)?))?;
            }
            writeln!(out, "value: {}", num(bounds::kappa(n, delta, u)?))?;
        }
        Quantity::Sbound => {
            let n = require(a.n, "n", q)?;
            let (mu, cx) = (require(a.mu, "mu", q)?, require(a.cx, "cx", q)?);
            writeln!(out, "lambda: {}", num(bounds::lambda(delta / n.max(1) as f64)?))?;
            writeln!(out, "value: {}", num(bounds::sbound(n, delta, mu, cx)?))?;
        }
        Quantity::Thm33 | Quantity::Thm41 | Quantity::Thm51 | Quantity::Thm52 => {
            let n = require(a.n, "n", q)?;
            let mut inputs = BoundInputs::new(n, unit(&a)?, delta);
            if matches!(q, Quantity::Thm33 | Quantity::Thm41) {
                inputs = inputs.with_norm(require(a.snorm, "snorm", q)?);
            } else {
                inputs = inputs.with_data(require(a.mu, "mu", q)?, require(a.cx, "cx", q)?);
            }
            if sr && matches!(q, Quantity::Thm33 | Quantity::Thm52) {
                inputs = inputs.with_stochastic_substitution();
            }
            inputs.validate()?;
            write_intermediates(q, &inputs, out)?;
            let b = match q {
                Quantity::Thm33 => bounds::bound_thm33(&inputs)?,
                Quantity::Thm41 => bounds::bound_thm41(&inputs)?,
                Quantity::Thm51 => bounds::bound_thm51(&inputs)?,
                _ => bounds::bound_thm52(&inputs)?,
            };
            writeln!(out, "effective_u: {} ({})", num(inputs.u), b.effective_u_note)?;
            writeln!(out, "value: {}", num(b.value))?;
            writeln!(out, "informative: {}", b.informative)?;
        }
        Quantity::Classical => {
            let n = require(a.n, "n", q)?;
            let abs_sum = require(a.abs_sum, "abs-sum", q)?;
            let u = doubled(unit(&a)?, sr);
            let b = bounds::classical_bound(n, u, abs_sum)?;
            writeln!(out, "effective_u: {}", num(u))?;
            writeln!(out, "value: {}", num(b.value))?;
            writeln!(out, "informative: {}", b.informative)?;
        }
    }
    Ok(())
}

fn doubled(u: f64, sr: bool) -> f64 {
    if sr {
        2.0 * u
    } else {
        u
    }
}

fn write_intermediates(q: Quantity, i: &BoundInputs<f64>, out: &mut dyn Write) -> CmdResult {
    let n = i.n;
    let nf = n as f64;
    match q {
        Quantity::Thm33 | Quantity::Thm52 => {
            let lam = bounds::lambda(i.failure_prob / if q == Quantity::Thm33 { 2.0 } else { 3.0 })?;
            writeln!(out, "lambda: {}", num(lam))?;
            writeln!(out, "gamma_tilde: {}", num(bounds::gamma_tilde_with_lambda(n, lam, i.u)))?;
        }
        _ => {
            let divisor = if q == Quantity::Thm41 { nf - 1.0 } else { nf };
            let lam = bounds::lambda(i.failure_prob / divisor)?;
            let kappa = lam * nf.sqrt() * i.u;
            writeln!(out, "lambda: {}", num(lam))?;
            writeln!(out, "kappa: {}", num(kappa))?;
            writeln!(out, "geometric_factor: {}", num(bounds::geometric_factor(kappa, n)))?;
        }
    }
    Ok(())
}

fn cmd_crossover(a: CrossoverArgs, out: &mut dyn Write) -> CmdResult {
    let u = match (a.u, a.format) {
        (Some(u), _) => u,
        (None, Some(f)) => f.unit_roundoff(),
        (None, None) => return Err(Failure::Usage("crossover requires --format or --u".into())),
    };
    if !(a.lambda > 0.0 && u > 0.0) {
        return Err(Failure::Usage("lambda and u must be positive".into()));
    }
    writeln!(out, "lambda: {}", num(a.lambda))?;
    writeln!(out, "u: {}", num(u))?;
    writeln!(out, "crossover_n: {}", num(bounds::crossover_n(a.lambda, u)))?;
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let figure = match a.figure {
        FigureArg::ErrorBounds => Figure::ErrorBounds,
        FigureArg::ProductGrowth => Figure::ProductGrowth,
    };
    let mut cfg = ExperimentConfig::new(figure, a.format, a.rounding);
    let nmax = a.nmax.unwrap_or_else(|| experiments::default_nmax(&a.format));
    cfg.n_grid = experiments::log_grid(a.nmin, nmax, a.points)?;
    cfg.trials = a.trials;
    cfg.delta = a.delta;
    cfg.data = a.dist;
    cfg.master_seed = resolve_seed(a.seed)?;
    cfg.extended = a.extended;
    cfg.validate()?;

    let table = experiments::run_experiment::<f64>(&cfg)?;
    let destination = match &a.out {
        Some(path) => {
            write_atomically(path, |w| experiments::emit_csv(&table, w).map(|_| ()).map_err(Failure::from))?;
            path.display().to_string()
        }
        None => {
            experiments::emit_csv(&table, stdout)?;
            "stdout".to_string()
        }
    };
    let summary = format!(
        "{} {} {}: {} rows, {} trials per row, {} violations, {} failed trials, written to {}",
        figure,
        cfg.format,
        cfg.mode,
        table.rows.len(),
        cfg.trials,
        table.total_violations(),
        table.total_failed(),
        destination
    );
    let sink: &mut dyn Write = if a.out.is_some() { stdout } else { stderr };
    writeln!(sink, "{summary}")?;
    for f in &table.failures {
        writeln!(stderr, "failed trial: {f}")?;
    }
    Ok(())
}

/// Writes through a sibling temporary file and renames it into place, so a
/// failed write leaves no partial output behind.
fn write_atomically<F>(path: &Path, body: F) -> CmdResult
where
    F: FnOnce(&mut dyn Write) -> CmdResult,
{
    let name = path.file_name().ok_or_else(|| Failure::Usage(format!("'{}' is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let file = fs::File::create(&tmp)?;
        let mut w = io::BufWriter::new(file);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
