use thiserror::Error;

use super::{SolidSpec, Vec3};
use crate::Real;

/// Exact scalar descriptors of a body. `hull_surface` is the surface area
/// of the convex hull when known; for convex bodies it equals `surface`.
#[derive(Clone, Copy, Debug)]
pub struct BodyMetrics<T> {
    pub volume: T,
    pub surface: T,
    pub hull_surface: Option<T>,
    pub bounding_center: Vec3<T>,
    pub bounding_radius: T,
}

impl<T: Real> BodyMetrics<T> {
    /// Mean chord length of a uniform isotropic line hitting the body,
    /// `4V/S`.
    pub fn mean_chord_cauchy(&self) -> T {
        T::of(4.0) * self.volume / self.surface
    }

    /// Conservative diameter bound used as the histogram range.
    pub fn diameter(&self) -> T {
        self.bounding_radius + self.bounding_radius
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no closed-form metrics for this solid; supply a metrics override: {0}")]
    Unsupported(String),
    #[error("solid is structurally invalid: {0}")]
    Invalid(String),
}

fn sphere_metrics<T: Real>(center: Vec3<T>, radius: T) -> BodyMetrics<T> {
    let pi = T::PI();
    BodyMetrics {
        volume: T::of(4.0 / 3.0) * pi * radius.powi(3),
        surface: T::of(4.0) * pi * radius * radius,
        hull_surface: Some(T::of(4.0) * pi * radius * radius),
        bounding_center: center,
        bounding_radius: radius,
    }
}

fn cuboid_metrics<T: Real>(min: Vec3<T>, max: Vec3<T>) -> BodyMetrics<T> {
    let d = max - min;
    BodyMetrics {
        volume: d.x * d.y * d.z,
        surface: T::of(2.0) * (d.x * d.y + d.y * d.z + d.z * d.x),
        hull_surface: Some(T::of(2.0) * (d.x * d.y + d.y * d.z + d.z * d.x)),
        bounding_center: (min + max) * T::of(0.5),
        bounding_radius: (d * T::of(0.5)).norm(),
    }
}

/// Closed-form volume, surface and hull surface for the supported shapes:
/// spheres, boxes, concentric spherical shells, differences with a carved
/// part that lies entirely outside, and disjoint unions of the above.
/// Anything else is `MetricsError::Unsupported` and needs a user override.
pub fn metrics<T: Real>(solid: &SolidSpec<T>) -> Result<BodyMetrics<T>, MetricsError> {
    solid.validate().map_err(MetricsError::Invalid)?;
    let (bounding_center, bounding_radius) = solid.bounding_sphere();
    let mut m = metrics_inner(solid)?;
    // A union's members keep their own bounds; report the whole tree's.
    m.bounding_center = bounding_center;
    m.bounding_radius = bounding_radius;
    Ok(m)
}

fn metrics_inner<T: Real>(solid: &SolidSpec<T>) -> Result<BodyMetrics<T>, MetricsError> {
    match solid {
        SolidSpec::Sphere { center, radius } => Ok(sphere_metrics(*center, *radius)),
        SolidSpec::Cuboid { min, max } => Ok(cuboid_metrics(*min, *max)),
        SolidSpec::Difference(a, b) => {
            if let (
                SolidSpec::Sphere {
                    center: ca,
                    radius: ra,
                },
                SolidSpec::Sphere {
                    center: cb,
                    radius: rb,
                },
            ) = (a.as_ref(), b.as_ref())
            {
                let concentric = (*ca - *cb).norm() <= T::of(super::EPS_SCALE) * *ra;
                if concentric && rb < ra {
                    let pi = T::PI();
                    return Ok(BodyMetrics {
                        volume: T::of(4.0 / 3.0) * pi * (ra.powi(3) - rb.powi(3)),
                        surface: T::of(4.0) * pi * (*ra * *ra + *rb * *rb),
                        hull_surface: Some(T::of(4.0) * pi * *ra * *ra),
                        bounding_center: *ca,
                        bounding_radius: *ra,
                    });
                }
                if concentric {
                    return Err(MetricsError::Invalid(
                        "difference of concentric spheres with inner >= outer is empty".into(),
                    ));
                }
            }
            if a.aabb().disjoint_from(&b.aabb()) {
                return metrics_inner(a);
            }
            Err(MetricsError::Unsupported(
                "difference is only closed-form for concentric spheres or disjoint operands"
                    .into(),
            ))
        }
        SolidSpec::Union(children) => {
            for (i, a) in children.iter().enumerate() {
                for b in children.iter().skip(i + 1) {
                    if !a.aabb().disjoint_from(&b.aabb()) {
                        return Err(MetricsError::Unsupported(
                            "union members overlap; no closed-form metrics".into(),
                        ));
                    }
                }
            }
            let mut volume = T::zero();
            let mut surface = T::zero();
            for c in children {
                let m = metrics_inner(c)?;
                volume += m.volume;
                surface += m.surface;
            }
            let (bounding_center, bounding_radius) = solid.bounding_sphere();
            // The hull of a disjoint union is not the union of hulls.
            let hull_surface = if children.len() == 1 {
                metrics_inner(&children[0])?.hull_surface
            } else {
                None
            };
            Ok(BodyMetrics {
                volume,
                surface,
                hull_surface,
                bounding_center,
                bounding_radius,
            })
        }
        SolidSpec::Intersection(children) => {
            if children.len() == 1 {
                metrics_inner(&children[0])
            } else {
                Err(MetricsError::Unsupported(
                    "intersection has no closed-form metrics".into(),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn sphere_and_box() {
        let m = metrics(&SolidSpec::sphere(Vec3::zero(), 2.0)).unwrap();
        assert!((m.volume - 32.0 * PI / 3.0).abs() < 1e-12);
        assert!((m.surface - 16.0 * PI).abs() < 1e-12);
        assert_eq!(m.hull_surface, Some(m.surface));

        let m = metrics(&SolidSpec::cuboid(Vec3::<f64>::zero(), Vec3::new(1.0, 1.0, 1.0))).unwrap();
        assert_eq!(m.volume, 1.0);
        assert_eq!(m.surface, 6.0);
        assert!((m.mean_chord_cauchy() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn concentric_shell() {
        let m = metrics(&SolidSpec::shell(Vec3::zero(), 1.0, 0.5)).unwrap();
        assert!((m.volume - 7.0 * PI / 6.0).abs() < 1e-12);
        assert!((m.surface - 5.0 * PI).abs() < 1e-12);
        assert!((m.hull_surface.unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!((m.bounding_radius - 1.0).abs() < 1e-15);
        // Cauchy mean over all segments of a hitting line.
        assert!((m.mean_chord_cauchy() - 14.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_union_sums() {
        let two = SolidSpec::Union(vec![
            SolidSpec::sphere(Vec3::new(-3.0, 0.0, 0.0), 1.0),
            SolidSpec::sphere(Vec3::new(3.0, 0.0, 0.0), 1.0),
        ]);
        let m = metrics(&two).unwrap();
        assert!((m.volume - 8.0 * PI / 3.0).abs() < 1e-12);
        assert!((m.surface - 8.0 * PI).abs() < 1e-12);
        assert_eq!(m.hull_surface, None);
        assert!(m.bounding_radius > 3.9);
    }

    #[test]
    fn unsupported_cases_error() {
        let overlapping = SolidSpec::Union(vec![
            SolidSpec::sphere(Vec3::zero(), 1.0),
            SolidSpec::sphere(Vec3::new(0.5, 0.0, 0.0), 1.0),
        ]);
        assert!(matches!(
            metrics(&overlapping),
            Err(MetricsError::Unsupported(_))
        ));
        let empty = SolidSpec::shell(Vec3::zero(), 0.5, 1.0);
        assert!(matches!(metrics(&empty), Err(MetricsError::Invalid(_))));
        let bad: SolidSpec<f64> = SolidSpec::sphere(Vec3::zero(), -1.0);
        assert!(matches!(metrics(&bad), Err(MetricsError::Invalid(_))));
    }
}
