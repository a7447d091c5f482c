use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Floating point scalar used by the estimators and agents: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal or environment quantity.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn clamp01(self) -> Self {
        self.max(Self::zero()).min(Self::one())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn convert_slice<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::of(x)).collect()
}
