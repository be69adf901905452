//! Scalar abstraction for probabilities, weights and scores.
//!
//! All numeric code in this crate is generic over [`Real`], so the same
//! estimators and scores run on `f32` or `f64`. The crate root exposes
//! `f64` aliases for the common case.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used throughout the crate.
///
/// Blanket-implemented for every type with the listed bounds, in
/// particular `f32` and `f64`.
pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{}

/// `num / den` as a `Real`, for turning grounding counts into frequencies.
pub fn ratio<R: Real>(num: usize, den: usize) -> R {
    let n = R::from_usize(num).expect("count representable");
    let d = R::from_usize(den).expect("count representable");
    n / d
}

/// Renders a scalar with 17 significant decimal digits.
///
/// 17 digits uniquely identify an `f64`, so values written this way parse
/// back bit-identically.
pub fn format_sig17<R: Real>(value: R) -> String {
    format!("{:.16e}", value.to_f64().expect("finite scalar"))
}

/// Parses a decimal rendering produced by [`format_sig17`].
pub fn parse_sig17<R: Real>(text: &str) -> Option<R> {
    let v: f64 = text.parse().ok()?;
    R::from_f64(v)
}
