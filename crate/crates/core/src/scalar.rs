//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for weights, losses and parameters: `f32` or `f64`.
///
/// All log-space arithmetic is written against this trait. The acceptance
/// tolerances of the crate (simplex error `1e-12`, coherence bounds, ...) are
/// stated for `f64`; `f32` is supported with [`Scalar::simplex_tol`] widened to
/// match its precision.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Absolute tolerance on `|sum(weights) - 1|` for a valid distribution.
    fn simplex_tol() -> Self;

    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for the finite literals used in this crate.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Lossy conversion used for error messages and reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f64 {
    #[inline]
    fn simplex_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    #[inline]
    fn simplex_tol() -> Self {
        1e-5
    }
}
