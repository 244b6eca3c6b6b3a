//! Scalar abstraction for the numerical core.
//!
//! Everything downstream (kernel evaluation, quadrature, spectral fields,
//! particle dynamics) is generic over a floating-point scalar. `f64` is the
//! working type; `f32` is supported for quick low-precision sweeps.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar usable across the whole crate: ordinary float
/// arithmetic plus FFT support and thread safety.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand conversion from an `f64` literal or intermediate.
#[inline]
pub fn c<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("f64 value not representable in scalar type")
}

/// Conversion from a usize count.
#[inline]
pub fn cu<T: Scalar>(n: usize) -> T {
    T::from_usize(n).expect("usize value not representable in scalar type")
}
