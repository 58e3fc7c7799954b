//! Floating point abstraction for the simulation core.

use num_traits::{Float, FromPrimitive};

/// Scalar type for field values, utilities and probabilities.
///
/// `f32` and `f64` both satisfy the bound; concrete aliases live at the
/// crate root. Exact quantities (speeds, urn fractions) use
/// [`crate::rational::Rational`] instead and never pass through here.
pub trait Scalar:
    Float + FromPrimitive + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts a parameter or literal into the scalar type.
pub fn scalar<F: Scalar>(x: f64) -> F {
    F::from(x).expect("finite f64 converts into scalar")
}

/// `sqrt(2)` in the scalar type: the diagonal step length in cell units.
pub fn sqrt2<F: Scalar>() -> F {
    scalar(std::f64::consts::SQRT_2)
}
