//! Scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::Float;

/// Floating-point scalar the tensor/model code is generic over.
pub trait Scalar:
    Float + num_traits::NumAssignOps + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` for constants and config values.
    fn from_f64(v: f64) -> Self {
        Self::from(v).expect("f64 -> scalar conversion")
    }

    /// Widen to `f64` for logging, scoring and file formats.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar -> f64 conversion")
    }

    /// Narrow to `f32` for the checkpoint/feature payload format.
    fn to_f32_lossy(self) -> f32 {
        self.to_f32().expect("scalar -> f32 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
