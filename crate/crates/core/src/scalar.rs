use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used throughout the circuit and mapping code.
///
/// Implemented for `f32` and `f64`; every algorithm in this crate is generic
/// over it so the same code drives single- and double-precision runs.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    /// Convert an `f64` constant into this scalar type.
    #[inline]
    fn cast(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant representable in scalar type")
    }

    /// Two, handy for the many `x / 2` and `x * 2` spots.
    #[inline]
    fn two() -> Self {
        Self::cast(2.0)
    }

    /// Half, i.e. `0.5`.
    #[inline]
    fn half() -> Self {
        Self::cast(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Clamp `x` into `[lo, hi]`.
#[inline]
pub fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}
