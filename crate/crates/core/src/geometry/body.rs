use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{intersect_line, metrics, BodyMetrics, IntervalSet, Line, MetricsError, SolidSpec};
use crate::Real;

/// A solid together with its resolved metrics and the line-intersection
/// cleanup tolerance. All estimators work on this.
#[derive(Clone, Debug)]
pub struct Body<T> {
    pub solid: SolidSpec<T>,
    pub metrics: BodyMetrics<T>,
    eps: T,
}

impl<T: Real> Body<T> {
    /// Resolves metrics in closed form; fails for shapes without one.
    pub fn new(solid: SolidSpec<T>) -> Result<Self, MetricsError> {
        let m = metrics(&solid)?;
        Ok(Self::with_metrics(solid, m))
    }

    /// Accepts caller-supplied metrics (volume/surface must be positive).
    pub fn with_metrics(solid: SolidSpec<T>, metrics: BodyMetrics<T>) -> Self {
        assert!(
            metrics.volume > T::zero() && metrics.surface > T::zero(),
            "body must have positive volume and surface"
        );
        let eps = T::of(super::EPS_SCALE) * metrics.bounding_radius;
        Body {
            solid,
            metrics,
            eps,
        }
    }

    #[inline]
    pub fn eps(&self) -> T {
        self.eps
    }

    #[inline]
    pub fn intersect_line(&self, line: &Line<T>) -> IntervalSet<T> {
        intersect_line(&self.solid, line, self.eps)
    }

    #[inline]
    pub fn contains(&self, p: super::Vec3<T>) -> bool {
        super::contains(&self.solid, p)
    }

    /// `true` only when convexity is guaranteed by construction: primitives
    /// and intersections of convex parts. Used to gate the convex-only
    /// estimators; a `false` may still be geometrically convex.
    pub fn is_convex_by_construction(&self) -> bool {
        fn convex<T: Real>(s: &SolidSpec<T>) -> bool {
            match s {
                SolidSpec::Sphere { .. } | SolidSpec::Cuboid { .. } => true,
                SolidSpec::Intersection(children) => children.iter().all(convex),
                SolidSpec::Union(children) => children.len() == 1 && convex(&children[0]),
                SolidSpec::Difference(..) => false,
            }
        }
        convex(&self.solid)
    }
}

/// On-disk body description:
/// `{"solid": <csg>, "metrics": {"volume": .., "surface": .., "hull_surface": ..}?}`.
/// The metrics block is required exactly when the shape has no closed form.
#[derive(Debug, Serialize, Deserialize)]
pub struct BodyFile<T> {
    pub solid: SolidSpec<T>,
    #[serde(default = "none_metrics")]
    pub metrics: Option<MetricsOverride<T>>,
}

fn none_metrics<T>() -> Option<MetricsOverride<T>> {
    None
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MetricsOverride<T> {
    pub volume: T,
    pub surface: T,
    #[serde(default = "none_t", skip_serializing_if = "Option::is_none")]
    pub hull_surface: Option<T>,
}

fn none_t<T>() -> Option<T> {
    None
}

#[derive(Debug, Error)]
pub enum BodyFileError {
    #[error("cannot read body file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse body file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl<T: Real + Serialize + DeserializeOwned> Body<T> {
    pub fn from_json(text: &str) -> Result<Self, BodyFileError> {
        let file: BodyFile<T> = serde_json::from_str(text)?;
        file.solid
            .validate()
            .map_err(|e| BodyFileError::Metrics(MetricsError::Invalid(e)))?;
        match file.metrics {
            Some(over) => {
                let (bounding_center, bounding_radius) = file.solid.bounding_sphere();
                let m = BodyMetrics {
                    volume: over.volume,
                    surface: over.surface,
                    hull_surface: over.hull_surface,
                    bounding_center,
                    bounding_radius,
                };
                Ok(Body::with_metrics(file.solid, m))
            }
            None => Ok(Body::new(file.solid)?),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, BodyFileError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::super::Vec3;
    use super::*;

    #[test]
    fn body_file_with_closed_form() {
        let txt = r#"{"solid": {"difference": [
            {"sphere": {"center": [0,0,0], "radius": 1.0}},
            {"sphere": {"center": [0,0,0], "radius": 0.5}}
        ]}}"#;
        let body: Body<f64> = Body::from_json(txt).unwrap();
        assert!((body.metrics.volume - 7.0 * PI / 6.0).abs() < 1e-12);
        assert!(!body.is_convex_by_construction());
    }

    #[test]
    fn body_file_with_override() {
        let txt = r#"{"solid": {"union": [
            {"sphere": {"center": [0,0,0], "radius": 1.0}},
            {"sphere": {"center": [1.0,0,0], "radius": 1.0}}
        ]}, "metrics": {"volume": 3.6651914291880923, "surface": 12.566370614359172}}"#;
        let body: Body<f64> = Body::from_json(txt).unwrap();
        assert_eq!(body.metrics.hull_surface, None);
        assert!(body.metrics.bounding_radius > 1.0);
    }

    #[test]
    fn body_file_without_metrics_fails_for_open_shapes() {
        let txt = r#"{"solid": {"union": [
            {"sphere": {"center": [0,0,0], "radius": 1.0}},
            {"sphere": {"center": [1.0,0,0], "radius": 1.0}}
        ]}}"#;
        assert!(Body::<f64>::from_json(txt).is_err());
    }

    #[test]
    fn convexity_gate() {
        let ball = Body::new(SolidSpec::<f64>::sphere(Vec3::zero(), 1.0)).unwrap();
        assert!(ball.is_convex_by_construction());
        let lens = Body::with_metrics(
            SolidSpec::Intersection(vec![
                SolidSpec::sphere(Vec3::zero(), 1.0),
                SolidSpec::sphere(Vec3::new(0.5, 0.0, 0.0), 1.0),
            ]),
            ball.metrics,
        );
        assert!(lens.is_convex_by_construction());
    }
}
