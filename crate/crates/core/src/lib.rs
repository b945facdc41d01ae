//! Monte Carlo chord-length, radius and distance distributions for solids
//! built from sphere/box CSG, including the signed decompositions that make
//! the classic convex-body identities carry over to nonconvex bodies.
//!
//! The crate is generic over the floating-point scalar (`f32` or `f64`)
//! through [`Real`]; the aliases at the crate root fix `f64`, which is what
//! the CLI and the statistical test suites use.

pub mod dirac;
pub mod estimators;
pub mod geometry;
pub mod nonuniform;
pub mod paths;
pub mod report;
pub mod sampling;
pub mod signedhist;
pub mod stats;

mod scalar;

pub use scalar::Real;

/// Seed used by every driver and CLI entry point when none is given.
pub const DEFAULT_SEED: u64 = 0x5EED_C0DE;

/// Number of RNG substreams (and merge chunks) used when none is given.
pub const DEFAULT_STREAMS: usize = 64;

/// Default number of histogram bins, spanning `[0, body diameter]`.
pub const DEFAULT_BINS: usize = 256;

pub type Vec3f = geometry::Vec3<f64>;
pub type Linef = geometry::Line<f64>;
pub type IntervalSetf = geometry::IntervalSet<f64>;
pub type Solidf = geometry::SolidSpec<f64>;
pub type Bodyf = geometry::Body<f64>;
pub type SignedHistogramf = signedhist::SignedHistogram<f64>;
pub type MomentAccumulatorf = signedhist::MomentAccumulator<f64>;
pub type TestFunctionf = dirac::TestFunction<f64>;
pub type DensityFieldf = nonuniform::DensityField<f64>;
