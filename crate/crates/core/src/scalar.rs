//! Floating-point abstraction used by the math kernels.
//!
//! Geometry, thresholding and match-scoring code is generic over [`Real`]
//! so callers can trade precision for speed. Everything else in the crate
//! works with the concrete [`Scalar`] alias.

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the numeric kernels are written against.
pub trait Real: Float + FromPrimitive + NumAssign + Copy + Send + Sync + std::fmt::Debug {
    /// Lossless-enough conversion from `f64` for constants and weights.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant")
    }

    /// Conversion from pixel/bin counts.
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize fits in float")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Default precision used by the pipelines and public type aliases.
pub type Scalar = f64;
