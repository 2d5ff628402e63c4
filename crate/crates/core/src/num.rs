//! Scalar abstraction shared by every numerical module.
//!
//! All of the physics is written against [`Real`], so the same code runs in
//! `f64` (the default used by the ensemble drivers and the CLI) or in `f32`
//! for quick low-precision sweeps.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating point scalar usable throughout the crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar.
    fn lit(x: f64) -> Self;

    /// Widens to `f64` (lossless for both supported types).
    fn to_f64_lossless(self) -> f64;

    /// Draws one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draws a uniform variate on `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline(always)]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline(always)]
            fn to_f64_lossless(self) -> f64 {
                self as f64
            }

            #[inline(always)]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <StandardNormal as Distribution<$t>>::sample(&StandardNormal, rng)
            }

            #[inline(always)]
            fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let two_pi = T::TAU();
    if theta > -T::PI() && theta <= T::PI() {
        return theta;
    }
    let mut w = theta - two_pi * ((theta + T::PI()) / two_pi).floor();
    // w is now in [-π, π); move the left endpoint to the right one.
    if w <= -T::PI() {
        w = w + two_pi;
    }
    w
}

/// Signed shortest angular difference `b - a`, in `(-π, π]`.
#[inline]
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    wrap_angle(b - a)
}
