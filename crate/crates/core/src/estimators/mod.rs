//! Monte Carlo drivers turning sampled lines, rays and point pairs into
//! signed histograms, moment accumulators and derived tables.
//!
//! Each driver fans work out over the deterministic substreams of a
//! [`SamplePlan`](crate::sampling::SamplePlan), merges per-chunk histograms
//! exactly, and keeps per-chunk scalar statistics so callers can quote
//! batch-means standard errors alongside every estimate.

mod chords;
mod decompose;
mod distances;
mod gamma;
mod radii;
mod relations;

pub use chords::{estimate_chords, ChordChunkStats, ChordEstimate};
pub use decompose::{
    chord_decompose, radii_decompose, ChordDecomposition, DecomposeError, RadiiDecomposition,
};
pub use distances::{estimate_distances, DistanceEstimate};
pub use gamma::{signed_cld_from_gamma, GammaTable, SignedCld, ZeroFit, SLOPE_FIT_BINS};
pub use radii::{estimate_radii, RadiiChunkStats, RadiiEstimate};
pub use relations::{check_randomness_relations, RandomnessReport};

use crate::sampling::{SampleError, SamplePlan};
use crate::signedhist::HistError;

/// Shared knobs for the sampling drivers.
#[derive(Clone, Debug)]
pub struct EstimatorConfig {
    /// Number of accepted samples (hitting lines, interior rays, or point
    /// pairs, depending on the driver).
    pub samples: u64,
    /// Histogram resolution over the support.
    pub n_bins: usize,
    /// Histogram support override `(lo, hi)`; `None` lets each driver use
    /// its natural support (`[0, diameter]`, scaled by the peak density
    /// for optical chords). Samples outside an explicit range accumulate
    /// in the overflow tallies rather than being dropped.
    pub range: Option<(f64, f64)>,
    /// Seed and substream layout.
    pub plan: SamplePlan,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            n_bins: crate::DEFAULT_BINS,
            range: None,
            plan: SamplePlan::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn with_samples(samples: u64) -> Self {
        Self {
            samples,
            ..Self::default()
        }
    }

    /// Histogram edges: the explicit range when set, `[0, default_hi]`
    /// otherwise.
    pub fn hist_edges<T: crate::Real>(&self, default_hi: T) -> (T, T) {
        match self.range {
            Some((lo, hi)) => (T::of(lo), T::of(hi)),
            None => (T::zero(), default_hi),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EstimateError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Hist(#[from] HistError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error("no line hit the body in {0} consecutive attempts")]
    HitStall(u64),
    #[error("estimator is defined for bodies convex by construction only")]
    NonConvexUnsupported,
    #[error("smoothing window must be odd and at least 5, got {0}")]
    BadWindow(usize),
    #[error("table of {n_bins} bins cannot support a window of {window}")]
    GridTooCoarse { n_bins: usize, window: usize },
}

/// Batch-means standard error of per-chunk values, `0` when fewer than two
/// chunks contribute.
pub(crate) fn chunk_stderr(values: &[f64]) -> f64 {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return 0.0;
    }
    crate::stats::batch_mean(&finite).1
}

