//! Floating-point abstraction used throughout the crate.
//!
//! All numerical code is generic over [`Scalar`], which is implemented for
//! `f32` and `f64`. Concrete type aliases for the common `f64` instantiation
//! live at the crate root.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Scalar type the numerics run on: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossy cast from `f64`; panics only on values unrepresentable even
    /// approximately (never for finite literals).
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Error function.
    fn erf(self) -> Self;

    /// Complementary error function.
    fn erfc(self) -> Self;

    /// One draw from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f64 {
    fn erf(self) -> Self {
        libm::erf(self)
    }

    fn erfc(self) -> Self {
        libm::erfc(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f32 {
    fn erf(self) -> Self {
        libm::erff(self)
    }

    fn erfc(self) -> Self {
        libm::erfcf(self)
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        assert!((<f64 as Scalar>::erf(1.0) - 0.8427007929497149).abs() < 1e-15);
        assert!((<f64 as Scalar>::erf(-1.0) + 0.8427007929497149).abs() < 1e-15);
        assert!((<f32 as Scalar>::erf(1.0f32) - 0.842_700_8).abs() < 1e-6);
    }

    #[test]
    fn cast_round_trips_f64() {
        let x = 0.123456789012345678;
        assert_eq!(<f64 as Scalar>::cast(x), x);
    }
}
