//! Contrail segmentation toolkit.
//!
//! The pipeline runs from GOES-16 ABI brightness-temperature bands to a
//! submission file:
//!
//! * [`npy`] reads and writes the NPY arrays every record is stored in;
//! * [`falsecolor`] builds the ash-RGB composite and the standardized model
//!   input;
//! * [`autodiff`] is a small reverse-mode engine used by [`models`] to train a
//!   tiny UNet and a mini UPerNet with class-weighted cross-entropy and AdamW;
//! * [`maskops`] holds masks, the RLE codec and the labeling-rule checker;
//! * [`metrics`] scores predictions with Dice and IoU;
//! * [`pipeline`] generates synthetic records, fuses model predictions and
//!   reads/writes submissions.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! name the common instantiations.

pub mod autodiff;
pub mod falsecolor;
pub mod maskops;
pub mod metrics;
pub mod models;
pub mod npy;
pub mod pipeline;
mod scalar;

pub use scalar::{floats_from_array_data, Real};

/// Working precision for training and inference.
pub type Tensor32 = autodiff::Tensor<f32>;
/// Verification precision for gradient checks.
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type BandCube32 = falsecolor::BandCube<f32>;
pub type BandCube64 = falsecolor::BandCube<f64>;
pub type AshImage32 = falsecolor::AshImage<f32>;
pub type Network32 = models::Network<f32>;
pub type Network64 = models::Network<f64>;
