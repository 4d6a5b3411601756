//! Emulated low-precision recursive summation with per-step rounding traces,
//! order-by-order error decomposition, probabilistic error bounds and Monte
//! Carlo campaigns that compare the two.
//!
//! The numerical core is generic over the carrier scalar (`f64` or `f32`);
//! the aliases below fix it to `f64`, which is what the CLI uses.

pub mod fpemu;
pub mod scalar;
pub mod summation;
pub mod decomp;
pub mod bounds;
pub mod experiments;
pub mod cli;

pub use bounds::{BoundInputs, BoundValue, BoundsError, Theorem};
pub use decomp::{DecompError, OrderDecomposition};
pub use experiments::{DataSpec, ExperimentConfig, ExperimentError, Figure, SeriesRow, SeriesTable};
pub use fpemu::{EmuError, FloatFormat, RoundingMode};
pub use scalar::Scalar;
pub use summation::{RecursiveSummer, Step, SumError, SummationTrace};

pub type Trace64 = SummationTrace<f64>;
pub type Trace32 = SummationTrace<f32>;
pub type Decomposition64 = OrderDecomposition<f64>;
pub type BoundInputs64 = BoundInputs<f64>;
pub type BoundValue64 = BoundValue<f64>;
pub type SeriesTable64 = SeriesTable<f64>;
pub type SeriesRow64 = SeriesRow<f64>;
