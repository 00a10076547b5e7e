//! Scalar abstraction shared by all numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the solvers are generic over.
///
/// Blanket-implemented for anything with IEEE float semantics plus the
/// conversions the crate needs; in practice `f32` and `f64`. The CLI and the
/// crate-root type aliases fix `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
}

/// Converts an `f64` literal into `S`. Panics on NaN inputs only, which never
/// occur for the fixed literals this is used with.
pub(crate) fn fl<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("literal conversion")
}

/// Lossy view of `S` as `f64` for error reporting.
pub(crate) fn as_f64<S: Scalar>(v: S) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
