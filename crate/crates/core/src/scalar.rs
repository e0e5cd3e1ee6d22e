//! Scalar abstraction shared by every piece of similarity math.
//!
//! Vectors, cosine scores, thresholds and metric values are all generic over
//! [`Scalar`]; `f64` is what the pipeline runs on, `f32` is supported for
//! memory-bound catalogs.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Lossless-enough conversion of a count.
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable as a float")
    }

    /// Conversion from an `f64` literal or wire value.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 representable in scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ratio of two counts, `None` when the denominator is zero.
pub fn ratio<S: Scalar>(num: usize, den: usize) -> Option<S> {
    (den != 0).then(|| S::from_count(num) / S::from_count(den))
}
