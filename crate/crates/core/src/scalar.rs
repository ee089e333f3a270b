//! Floating-point scalar abstraction shared by the linear-algebra modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the embedding, alignment and out-of-sample code.
///
/// Implemented for `f32` and `f64`. Tolerances throughout the crate are
/// written for double precision and rescaled with [`Scalar::tol`] so that a
/// single call site works for both widths.
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + std::fmt::Display + 'static
{
    /// Machine epsilon of the type, as `f64`.
    const EPSILON_F64: f64;

    /// Lossless-enough conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar converts to f64")
    }

    /// Rescale a tolerance calibrated for `f64` to this type's precision.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::lit(x * (Self::EPSILON_F64 / f64::EPSILON).max(1.0))
    }
}

impl Scalar for f64 {
    const EPSILON_F64: f64 = f64::EPSILON;
}

impl Scalar for f32 {
    const EPSILON_F64: f64 = f32::EPSILON as f64;
}
