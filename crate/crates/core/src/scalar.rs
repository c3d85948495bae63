//! Scalar abstraction for the numeric kernels.
//!
//! The function approximator and the reward model are written once over
//! [`Scalar`] and instantiated for `f32` and `f64`. Everything that compares
//! returns (trajectory ordering, value iteration, the equivalence verifier)
//! stays in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: f32 or f64.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
///
/// For negative arguments the value is formed as `1 - logistic(-x)`, so
/// `logistic(x) + logistic(-x) == 1` holds exactly.
pub fn logistic<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        T::one() - T::one() / (T::one() + x.exp())
    }
}

/// `ln(1 + exp(x))` without overflow.
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `temperature * ln(sum(exp(values / temperature)))`, shifted by the maximum.
pub fn soft_max_value<T: Scalar>(values: &[T], temperature: T) -> T {
    let max = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let sum: T = values
        .iter()
        .map(|&v| ((v - max) / temperature).exp())
        .sum();
    max + temperature * sum.ln()
}
