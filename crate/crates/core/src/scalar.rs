//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar the regression engine is generic over (`f32` or `f64`).
///
/// Distribution functions (t, F, chi-square quantiles) are evaluated in `f64`
/// and converted back, so `f32` loses nothing beyond its own precision.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
}

/// Weighted inner product `Σ wᵢ aᵢ bᵢ` (unnormalized).
pub(crate) fn wdot<T: Scalar>(w: &[T], a: &[T], b: &[T]) -> T {
    w.iter()
        .zip(a)
        .zip(b)
        .map(|((&wi, &ai), &bi)| wi * ai * bi)
        .sum()
}
