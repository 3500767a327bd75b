//! Scalar abstractions shared by the probability and bound code.
//!
//! [`Scalar`] covers anything that can hold a probability exactly enough to
//! be summed and compared: `f32`, `f64`, and [`Rational`]. [`Real`] adds the
//! transcendental functions needed for angles and exponential bounds.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Signed};

/// Exact rational probabilities for enumeration checks.
pub type Rational = Ratio<i64>;

/// A number type usable for probability arithmetic.
pub trait Scalar: Num + Signed + PartialOrd + Copy + Debug + Send + Sync + 'static {
    /// Absolute slack allowed when checking that probabilities sum to one.
    fn normalization_tolerance() -> Self;

    fn from_ratio(numer: i64, denom: i64) -> Self;
}

impl Scalar for f64 {
    fn normalization_tolerance() -> Self {
        1e-12
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f64 / denom as f64
    }
}

impl Scalar for f32 {
    fn normalization_tolerance() -> Self {
        1e-6
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        numer as f32 / denom as f32
    }
}

impl Scalar for Rational {
    fn normalization_tolerance() -> Self {
        Ratio::from_integer(0)
    }

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Ratio::new(numer, denom)
    }
}

/// floating point: f32 or f64
pub trait Real: Scalar + Float + FloatConst + FromPrimitive {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_tolerance_is_exact() {
        assert_eq!(Rational::normalization_tolerance(), Rational::from_integer(0));
        assert_eq!(Rational::from_ratio(2, 4), Rational::new(1, 2));
    }

    #[test]
    fn real_literals() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::from_count(7), 7.0);
    }
}
