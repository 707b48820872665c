use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point type the numerical kernels are generic over.
///
/// Implemented for `f32` and `f64`; the shipped solvers and the CLI work in
/// `f64` (see the [`Real`](crate::Real) alias).
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` for constants and tolerances.
    fn cast(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant not representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
