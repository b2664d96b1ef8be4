//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Operations are recorded on a [`Tape`] as they execute; [`Tape::backward`]
//! replays them in reverse. The operator set is exactly what the segmentation
//! models need: convolution (including grouped/depthwise), pooling, bilinear
//! resizing, pointwise activations, channel normalization, concatenation,
//! softmax and class-weighted cross-entropy.
//!
//! Conventions: NCHW layout, cross-correlation (no kernel flip), half-pixel
//! bilinear sampling, and max-pool gradients routed to the first maximum.

mod activation;
mod checkpoint;
mod conv;
mod gemm;
mod loss;
mod norm;
mod pool;
mod tape;
mod tensor;

use thiserror::Error;

pub use activation::Activation;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointError, Param, ParamStore};
pub use conv::ConvGeometry;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
}
