use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar the estimators are generic over (`f32` or `f64`).
///
/// Everything numerical in this crate is written against this trait; the
/// concrete `f64` aliases at the crate root are what the CLI uses.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values unrepresentable as `Self`,
    /// which never happens for the finite constants used here.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// Natural log of the gamma function, evaluated in double precision.
    #[inline]
    fn ln_gamma(self) -> Self {
        Self::lit(statrs::function::gamma::ln_gamma(self.to_f64_lossy()))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
