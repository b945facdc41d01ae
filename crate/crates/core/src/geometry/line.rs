use super::Vec3;
use crate::Real;

/// Directed line `origin + t * direction` with unit `direction`.
#[derive(Clone, Copy, Debug)]
pub struct Line<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
}

impl<T: Real> Line<T> {
    /// Normalizes `direction`; it must be nonzero.
    pub fn new(origin: Vec3<T>, direction: Vec3<T>) -> Self {
        let direction = direction.normalized();
        debug_assert!((direction.norm() - T::one()).abs() < T::of(1e-12));
        Line { origin, direction }
    }

    /// Trusts the caller that `direction` is already unit length.
    #[inline]
    pub fn from_unit(origin: Vec3<T>, direction: Vec3<T>) -> Self {
        debug_assert!((direction.norm() - T::one()).abs() < T::of(1e-12));
        Line { origin, direction }
    }

    #[inline]
    pub fn point_at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }

    /// Same geometric line traversed the other way, with `t = 0` fixed.
    #[inline]
    pub fn reversed(&self) -> Self {
        Line {
            origin: self.origin,
            direction: -self.direction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_direction() {
        let l = Line::new(Vec3::<f64>::zero(), Vec3::new(0.0, 3.0, 4.0));
        assert!((l.direction.norm() - 1.0).abs() < 1e-15);
        let p = l.point_at(5.0);
        assert!((p - Vec3::new(0.0, 3.0, 4.0)).norm() < 1e-12);
    }
}
