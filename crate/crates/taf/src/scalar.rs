use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric core is generic over: `f32` or `f64`.
///
/// Training and gradient checking want `f64`; feature files store `f32`.
/// Everything in between takes any `Real`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Widens to `f64` (lossless for f32 and f64).
    fn dbl(self) -> f64 {
        self.to_f64().expect("float widens to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
