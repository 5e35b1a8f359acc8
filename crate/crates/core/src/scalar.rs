//! Scalar abstraction for the precision-agnostic parts of the crate.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::Debug;

/// Floating-point type usable by the generic routines (`f32` or `f64`).
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Send + Sync + 'static {
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}
