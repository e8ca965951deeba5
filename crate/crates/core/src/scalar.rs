use core::fmt::Debug;
use core::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::float::FloatCore;

/// Floating-point storage type of a graph.
///
/// `f32` is the training and inference precision; `f64` exists so that
/// finite-difference gradient checks have enough headroom.
///
/// Transcendental functions always go through `libm`, never the platform
/// math library, so results are bit-identical with or without `std` and
/// regardless of which other crates enable `num-traits/std`.
pub trait Scalar:
    FloatCore + Default + Debug + AddAssign + SubAssign + MulAssign + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn erf(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn exp(self) -> Self {
        libm::expf(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::logf(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrtf(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanhf(self)
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn exp(self) -> Self {
        libm::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        libm::log(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        libm::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        libm::tanh(self)
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_libm_bitwise() {
        for x in [-3.5f64, -0.25, 0.0, 0.7, 2.0, 9.0] {
            assert_eq!(Scalar::exp(x).to_bits(), libm::exp(x).to_bits());
            assert_eq!(Scalar::tanh(x as f32).to_bits(), libm::tanhf(x as f32).to_bits());
        }
        assert_eq!(Scalar::ln(2.0f32), libm::logf(2.0));
    }
}
