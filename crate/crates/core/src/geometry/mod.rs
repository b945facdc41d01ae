//! Solids as sphere/box CSG trees, line-solid intersection as interval
//! arithmetic along the line parameter, and analytic body metrics.

mod body;
mod interval;
mod line;
mod metrics;
mod solid;
mod vec3;

pub use body::{Body, BodyFile, BodyFileError, MetricsOverride};
pub use interval::{interval_boolean, BoolOp, IntervalSet};
pub use line::Line;
pub use metrics::{metrics, BodyMetrics, MetricsError};
pub use solid::{contains, estimate_volume_mc, intersect_line, Aabb, SolidSpec};
pub use vec3::Vec3;

/// Interval cleanup tolerance as a fraction of the body bounding radius:
/// intersection intervals shorter than this are dropped and gaps shorter
/// than this are merged, so grazing CSG boundaries cannot leak sliver
/// intervals into the decompositions.
pub const EPS_SCALE: f64 = 1e-9;
