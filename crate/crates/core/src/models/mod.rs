//! Toy segmentation networks and their training machinery.
//!
//! Two architectures share one parameter/forward interface:
//!
//! * `unet_tiny`: `depth` encoder levels of (conv3×3 → relu) ×2 followed by
//!   2×2 max pooling, a bottleneck, and a mirrored decoder that upsamples
//!   bilinearly, concatenates the skip and applies another double conv;
//! * `upernet_mini`: a ConvNeXt-style backbone (patchify stem, one block per
//!   stage of depthwise 7×7 → channel norm → 1×1 expand ×4 → gelu → 1×1
//!   project with a residual add), a pyramid pooling module with bins
//!   {1, 2, 3, 6} on the deepest stage, and an FPN decoder whose levels are
//!   fused at the finest resolution.
//!
//! Both end in a two-class 1×1 head at input resolution.

mod data;
mod layers;
mod network;
mod optim;
mod train;
mod unet;
mod upernet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::AutodiffError;

pub use data::{filter_positive, split_kfold, Labeled};
pub use network::Network;
pub use optim::{adamw_step, adamw_update, lr_at, OptState};
pub use train::{evaluate_dice, predict_masks, train, EpochRecord, Sample, TrainOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("bad model config: {0}")]
    BadConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least {needed} records, have {have}")]
    TooFewRecords { needed: usize, have: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{0}")]
    Callback(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    UnetTiny,
    UpernetMini,
}

impl std::str::FromStr for Architecture {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unet_tiny" => Ok(Self::UnetTiny),
            "upernet_mini" => Ok(Self::UpernetMini),
            other => Err(ModelError::BadConfig(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub in_channels: usize,
    pub base_width: usize,
    /// Encoder levels (UNet) or backbone stages (UPerNet).
    pub depth: usize,
    #[serde(default = "default_classes")]
    pub num_classes: usize,
}

fn default_classes() -> usize {
    2
}

impl ModelConfig {
    pub fn unet_tiny(in_channels: usize, base_width: usize, depth: usize) -> Self {
        Self {
            architecture: Architecture::UnetTiny,
            in_channels,
            base_width,
            depth,
            num_classes: 2,
        }
    }

    pub fn upernet_mini(in_channels: usize, base_width: usize, depth: usize) -> Self {
        Self {
            architecture: Architecture::UpernetMini,
            ..Self::unet_tiny(in_channels, base_width, depth)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::BadConfig(m));
        if self.base_width < 4 {
            return bad(format!("base_width {} < 4", self.base_width));
        }
        if !(2..=4).contains(&self.depth) {
            return bad(format!("depth {} outside 2..=4", self.depth));
        }
        if self.in_channels == 0 {
            return bad("in_channels must be positive".into());
        }
        if self.num_classes != 2 {
            return bad(format!("num_classes must be 2, got {}", self.num_classes));
        }
        Ok(())
    }

    /// Spatial extents must be positive multiples of `2^depth`.
    pub fn check_input(&self, height: usize, width: usize) -> Result<(), ModelError> {
        let f = 1usize << self.depth;
        if height == 0 || width == 0 || !height.is_multiple_of(f) || !width.is_multiple_of(f) {
            return Err(ModelError::BadConfig(format!(
                "input {height}x{width} not divisible by 2^{} = {f}",
                self.depth
            )));
        }
        Ok(())
    }
}

/// Optimizer, schedule and loss settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Cross-entropy weight of the contrail class (background weight is 1).
    pub pos_weight: f64,
    /// Polynomial decay exponent; the rate reaches zero at the last step.
    pub poly_power: f64,
    /// Probability threshold used when scoring the validation set.
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2.5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            epochs: 20,
            batch_size: 4,
            pos_weight: 10.0,
            poly_power: 0.9,
            threshold: 0.75,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("eps", self.eps),
            ("pos_weight", self.pos_weight),
            ("poly_power", self.poly_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ModelError::BadConfig("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(ModelError::BadConfig("weight_decay must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::BadConfig("batch_size must be positive".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(ModelError::BadConfig("threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn class_weights(&self) -> [f64; 2] {
        [1.0, self.pos_weight]
    }
}
