//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar the algorithms are written against: `f32` or `f64`.
///
/// Math functions come from [`RealField`]; conversions from num-traits.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal or configuration value into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 is representable in every Real type")
}

#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(v: usize) -> T {
    T::from_usize(v).expect("usize is representable in every Real type")
}

/// `base`, widened to `ulps` machine epsilons of `T` when that is larger.
#[inline]
pub fn tol<T: Real>(base: f64, ulps: f64) -> T {
    lit::<T>(base).max(T::default_epsilon() * lit(ulps))
}
