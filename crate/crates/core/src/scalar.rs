//! Scalar abstraction: every quantity in this crate is generic over a
//! floating-point type so the whole laboratory runs in `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Floating-point scalar the laboratory computes with.
///
/// `f64` is the working type of the CLI and of every frozen expectation in
/// the test suites; `f32` is supported for quick, low-precision sweeps.
pub trait Real: Float + FromPrimitive + NumAssign + Sum + Debug + Display + 'static {
    /// Converts an `f64` constant into `Self`. Panics on values a float
    /// cannot represent, which no constant in this crate is.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("constant representable in any float type")
    }

    /// Lossy view as `f64`, used for diagnostics and error payloads.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `ln 2` in the working precision.
    #[inline]
    fn ln_2() -> Self {
        Self::lit(std::f64::consts::LN_2)
    }
}

impl Real for f32 {}
impl Real for f64 {}
