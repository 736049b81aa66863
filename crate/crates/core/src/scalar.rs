//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type the attention engine is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Allowed deviation of a probability row sum from one.
    const ROW_SUM_TOLERANCE: f64;

    /// Converts an `f64` constant; every `f64` is representable (possibly rounded).
    fn lit(value: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Scalar for f64 {
    const ROW_SUM_TOLERANCE: f64 = 1e-9;

    #[inline]
    fn lit(value: f64) -> Self {
        value
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const ROW_SUM_TOLERANCE: f64 = 1e-5;

    #[inline]
    fn lit(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

/// Casts a count to the scalar type.
#[inline]
pub(crate) fn from_count<T: Scalar>(n: usize) -> T {
    T::lit(n as f64)
}
