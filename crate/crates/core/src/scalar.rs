use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
///
/// Everything numeric in the crate is generic over this trait; the RNG layer
/// draws `f64` internally and narrows, so no extra bounds leak into callers.
pub trait Real:
    Float
    + FloatConst
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64`; exact for `f64`, rounded for `f32`.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 literal")
    }

    /// Widening conversion back to `f64`.
    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar fits in f64")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    #[inline]
    fn half(self) -> Self {
        self / (Self::one() + Self::one())
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(f64::of(1.5), 1.5);
        assert_eq!(f32::of(1.5), 1.5f32);
        assert_eq!(2.0f64.as_f64(), 2.0);
        assert_eq!(f64::of_usize(7), 7.0);
        assert_eq!(3.0f64.half(), 1.5);
    }
}
