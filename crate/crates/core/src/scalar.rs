//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point type the estimators are generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// Converts an integer count into `T`.
#[inline]
pub fn count<T: Real>(n: u64) -> T {
    T::from_u64(n).expect("count representable in scalar type")
}

/// Lossy conversion to `f64`, used at the sampling boundary.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `n!` as a scalar.
pub fn factorial<T: Real>(n: u32) -> T {
    (1..=n).fold(T::one(), |acc, k| acc * count::<T>(u64::from(k)))
}

/// Absolute tolerance `target`, widened to a few ulps when `T` cannot resolve it.
#[inline]
pub fn tol<T: Real>(target: f64) -> T {
    lit::<T>(target).max(T::epsilon() * lit(64.0))
}
