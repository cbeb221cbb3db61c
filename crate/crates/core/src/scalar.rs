//! Floating-point abstraction shared by every numerical module.
//!
//! The simulation kernels are written once against [`Real`] and instantiated
//! for `f64` (the default, used by the CLI and all tolerance-pinned checks)
//! and `f32` (useful for quick exploratory sweeps).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by the simulator: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Short name used in diagnostics.
    const NAME: &'static str;
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

/// Complex number over a [`Real`] scalar.
pub type Cplx<T> = Complex<T>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in target float")
}

/// Converts a count into `T`.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in target float")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn c_to_f64<T: Real>(z: Cplx<T>) -> Complex<f64> {
    Complex::new(to_f64(z.re), to_f64(z.im))
}

#[inline]
pub fn c_from_f64<T: Real>(z: Complex<f64>) -> Cplx<T> {
    Complex::new(lit(z.re), lit(z.im))
}
