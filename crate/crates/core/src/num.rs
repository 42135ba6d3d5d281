//! Scalar abstraction shared by every numerical module.

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::{de::DeserializeOwned, Serialize};
use std::fmt::{Debug, Display};

/// Real scalar the simulator is generic over: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C<T> = Complex<T>;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn cone<T: Real>() -> C<T> {
    Complex::new(T::one(), T::zero())
}

/// `e^{i x}`.
#[inline]
pub fn cis<T: Real>(x: T) -> C<T> {
    Complex::new(x.cos(), x.sin())
}

/// Tolerance for "is normalized" checks: `1e-10`, or a few ulps when the
/// scalar type cannot resolve that.
pub fn norm_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0))
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle<T: Real>(x: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut y = (x + T::PI()) % two_pi;
    if y < T::zero() {
        y += two_pi;
    }
    y - T::PI()
}
