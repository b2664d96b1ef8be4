//! Working-precision scalar abstraction.
//!
//! Everything numeric in the toolkit (tensors, band cubes, false-color images,
//! parameters) is generic over [`Real`]. Training runs in `f32`; gradient
//! verification runs in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

use crate::npy::{ArrayData, Dtype};

/// Floating-point scalar usable throughout the toolkit: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// NPY dtype used when persisting values of this type.
    const DTYPE: Dtype;

    /// Lossless-for-constants conversion from `f64`.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 is representable in every Real")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("Real converts to f64")
    }

    /// Wrap a buffer as NPY payload of [`Self::DTYPE`].
    fn into_array_data(values: Vec<Self>) -> ArrayData;
}

impl Real for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn into_array_data(values: Vec<Self>) -> ArrayData {
        ArrayData::F32(values)
    }
}

impl Real for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn into_array_data(values: Vec<Self>) -> ArrayData {
        ArrayData::F64(values)
    }
}

/// Convert any floating NPY payload to the working precision.
/// Returns `None` for integer and boolean payloads.
pub fn floats_from_array_data<T: Real>(data: &ArrayData) -> Option<Vec<T>> {
    match data {
        ArrayData::F32(v) => Some(v.iter().map(|&x| T::of(f64::from(x))).collect()),
        ArrayData::F64(v) => Some(v.iter().map(|&x| T::of(x)).collect()),
        _ => None,
    }
}
