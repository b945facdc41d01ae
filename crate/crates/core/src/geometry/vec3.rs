use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::de::{Deserialize, Deserializer};
use serde::ser::{Serialize, Serializer};

use crate::Real;

/// Point or vector in 3-space. Serializes as a JSON array `[x, y, z]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn normalized(self) -> Self {
        self / self.norm()
    }

    #[inline]
    pub fn axis(self, i: usize) -> T {
        match i {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn min_by_axis(self, o: Self) -> Self {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max_by_axis(self, o: Self) -> Self {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    /// Deterministic right-handed orthonormal basis completing `self`,
    /// which must be unit length.
    pub fn orthonormal_basis(self) -> (Self, Self) {
        // Branchless construction; stable for every direction of self.
        let sign = if self.z >= T::zero() { T::one() } else { -T::one() };
        let a = -(sign + self.z).recip();
        let b = self.x * self.y * a;
        let e1 = Vec3::new(
            T::one() + sign * self.x * self.x * a,
            sign * b,
            -sign * self.x,
        );
        let e2 = Vec3::new(b, sign + self.y * self.y * a, -self.y);
        (e1, e2)
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Serialize> Serialize for Vec3<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [&self.x, &self.y, &self.z].serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Vec3<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y, z] = <[T; 3]>::deserialize(d)?;
        Ok(Vec3 { x, y, z })
    }
}
