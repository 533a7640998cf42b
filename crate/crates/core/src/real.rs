use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Scalar type the deterministic numerics are written against.
///
/// Implemented for `f32` and `f64`. Quadrature tolerances are expressed in
/// the scalar type, so `f32` instantiations need correspondingly looser
/// tolerances than the `1e-10` default.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + FftNum + Display + Debug + Default + Sum
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    /// Conversion from an index or count.
    #[inline]
    fn from_usize_exact(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Machine epsilon, named to avoid clashing with `Float::epsilon`.
    #[inline]
    fn ulp() -> Self {
        <Self as Float>::epsilon()
    }
}

impl Real for f32 {}
impl Real for f64 {}
