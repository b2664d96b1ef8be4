//! Binary masks, their run-length text form, connected components, shape
//! moments, and the contrail labeling-rule checker.

mod components;
mod rle;
mod rules;

use thiserror::Error;

pub use components::{connected_components, elongation, ELONGATION_CAP};
pub use rle::{parse_runs, rle_decode, rle_encode, RleError};
pub use rules::{validate_track, ComponentTrack, RuleOptions, RuleReport};

use crate::falsecolor::{center_crop_plane, FalseColorError};

/// `(row, col)` of a pixel.
pub type Pixel = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("mask dimensions must be positive (got {0}x{1})")]
    EmptyDimensions(usize, usize),
    #[error("{bits} bits for a {height}x{width} mask")]
    SizeMismatch {
        height: usize,
        width: usize,
        bits: usize,
    },
    #[error("pixel ({0}, {1}) outside mask")]
    OutOfBounds(usize, usize),
    #[error("elongation of an empty component")]
    EmptyComponent,
    #[error("track frames must be strictly increasing with non-empty pixel sets")]
    MalformedTrack,
    #[error(transparent)]
    Crop(#[from] FalseColorError),
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BitMask {
    /// All-false mask.
    pub fn new(height: usize, width: usize) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::EmptyDimensions(height, width));
        }
        Ok(Self {
            height,
            width,
            bits: vec![false; height * width],
        })
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if height == 0 || width == 0 {
            return Err(MaskError::EmptyDimensions(height, width));
        }
        if bits.len() != height * width {
            return Err(MaskError::SizeMismatch {
                height,
                width,
                bits: bits.len(),
            });
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_pixels(
        height: usize,
        width: usize,
        pixels: impl IntoIterator<Item = Pixel>,
    ) -> Result<Self, MaskError> {
        let mut m = Self::new(height, width)?;
        for (r, c) in pixels {
            if r >= height || c >= width {
                return Err(MaskError::OutOfBounds(r, c));
            }
            m.bits[r * width + c] = true;
        }
        Ok(m)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    /// Always false: masks have positive extents.
    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    pub fn ones(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    pub fn center_crop(&self, out_h: usize, out_w: usize) -> Result<Self, MaskError> {
        let bits = center_crop_plane(&self.bits, self.height, self.width, out_h, out_w)?;
        Self::from_bits(out_h, out_w, bits)
    }

    /// Pixel-wise OR of two equally sized masks.
    pub fn union(&self, other: &BitMask) -> Result<Self, MaskError> {
        if self.dims() != other.dims() {
            return Err(MaskError::SizeMismatch {
                height: self.height,
                width: self.width,
                bits: other.len(),
            });
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a || b).collect();
        Self::from_bits(self.height, self.width, bits)
    }
}
