//! Generic real scalar type underlying all floating-point computation.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar for the numerical side of the library.
///
/// Every matrix, super-operator, and integrator is generic over this trait,
/// so the whole stack runs at `f32` or `f64`. Tolerances are passed in as
/// values of the same type.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; panics only for values outside the
    /// target type's range, which never occurs for the constants used here.
    fn cast(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("constant representable in scalar type")
    }

    /// Widening conversion to `f64` (exact for `f32` and `f64`).
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex number over the generic scalar.
pub type C<T> = Complex<T>;

/// i as a complex constant.
pub fn im<T: Scalar>() -> C<T> {
    C::new(T::zero(), T::one())
}

/// Real value lifted into the complex plane.
pub fn re<T: Scalar>(x: T) -> C<T> {
    C::new(x, T::zero())
}

/// Complex constant from a pair of `f64` literals.
pub fn c64<T: Scalar>(re: f64, im: f64) -> C<T> {
    C::new(T::cast(re), T::cast(im))
}
