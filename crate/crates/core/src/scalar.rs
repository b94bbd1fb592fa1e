//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point type the simulator is generic over (`f32` or `f64`).
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + for<'de> serde::Deserialize<'de>
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex amplitude over the scalar `T`.
pub type C<T> = Complex<T>;

/// Dense complex matrix in the truncated Fock basis.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    ToPrimitive::to_f64(&x).expect("scalar convertible to f64")
}

/// Tolerance for `T`: the requested value, floored at a small multiple of
/// machine epsilon so single precision gets a usable bound.
#[inline]
pub fn tol<T: Real>(requested: f64) -> T {
    let eps = to_f64(T::default_epsilon());
    lit(requested.max(64.0 * eps))
}

#[inline]
pub(crate) fn cre<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}
