use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point element type for feature vectors and distances.
///
/// Implemented for `f32` (the on-disk feature type) and `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Send + Sync + 'static
{
    /// Short dtype tag, as written in tensor headers.
    const DTYPE: &'static str;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}
