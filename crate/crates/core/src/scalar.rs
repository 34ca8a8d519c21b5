//! Scalar abstraction shared by the geometry, loss, encoding and decoding
//! kernels.
//!
//! The grid data model and the labeler work in `f64` (frames are stored as
//! `f32`); the detection math is generic so it can run on `f32` prediction
//! tensors without a conversion pass.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by the detection kernels: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Default + Debug + Display + Sum + Send + Sync + 'static
{
    /// Lossless for `f64`, rounding for `f32`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Pairwise (cascade) summation. The split points depend only on the length,
/// so the result is bit-stable for a given input order.
pub fn pairwise_sum<T: Real>(values: &[T]) -> T {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        return values.iter().fold(T::zero(), |acc, &v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
