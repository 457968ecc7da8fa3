//! Scalar abstraction shared by every numeric module.
//!
//! All signal processing, the acoustic model, the attacks and the uncertainty
//! statistics are written against [`Real`], which is implemented for `f32`
//! and `f64`. The crate root exposes `f64` aliases for the common types.

use std::fmt::{Debug, Display, LowerExp};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + FftNum
    + LinalgScalar
    + ScalarOperand
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Never fails for the implemented types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn sq(self) -> Self {
        self * self
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(sum(exp(xs)))` computed stably. Returns `-inf` when every input is `-inf`.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).fold(T::zero(), |a, b| a + b).ln()
}

/// Two-term log-sum-exp.
#[inline]
pub fn log_add<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
