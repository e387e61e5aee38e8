use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point element type accepted by the numeric modules.
///
/// Implemented for `f32` and `f64`. Embeddings are stored as `f32`;
/// metrics and trainers accumulate in `f64` regardless of the input type.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_f64() {
        assert_eq!(f32::from_f64_lossy(0.5).to_f64_lossy(), 0.5);
        assert_eq!(f64::from_f64_lossy(1e-300), 1e-300);
    }
}
