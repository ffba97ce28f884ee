use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::Num;

/// Numeric type metrics are computed in.
///
/// Implemented for `f32`, `f64` and the exact `Rational64`.
pub trait Scalar: Num + Copy + PartialOrd + Debug {
    fn from_count(n: usize) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    fn from_count(n: usize) -> Self {
        n as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_count(n: usize) -> Self {
        n as f32
    }

    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for Rational64 {
    fn from_count(n: usize) -> Self {
        Rational64::from_integer(i64::try_from(n).expect("count fits in i64"))
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
