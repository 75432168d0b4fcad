//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the transforms, solver and pipeline are generic over.
///
/// Implemented for `f32` and `f64`. Most tolerances in the crate are
/// expressed relative to [`Scalar::tolerance_floor`] so that the same code
/// path can be exercised in single precision.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
{
    /// Smallest relative tolerance that is meaningful for this precision.
    fn tolerance_floor() -> Self;

    /// Lossy conversion from `f64`, for constants and RNG output.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Scalar for f32 {
    fn tolerance_floor() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn tolerance_floor() -> Self {
        1e-13
    }
}
