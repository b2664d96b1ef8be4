//! Run-length text encoding of masks.
//!
//! Convention: the mask is flattened row-major, indices are 1-based, and the
//! text is space-separated `start length` pairs of maximal runs in increasing
//! order. An empty mask encodes to the empty string.

use std::fmt::Write;

use thiserror::Error;

use super::BitMask;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RleError {
    #[error("malformed RLE: {0}")]
    Malformed(String),
    #[error("run starting at {start} with length {length} exceeds {size} pixels")]
    OutOfBounds {
        start: usize,
        length: usize,
        size: usize,
    },
    #[error("run starting at {0} overlaps an earlier run")]
    OverlappingRuns(usize),
    #[error("mask dimensions must be positive")]
    EmptyDimensions,
}

pub fn rle_encode(mask: &BitMask) -> String {
    let mut out = String::new();
    let bits = mask.bits();
    let mut i = 0;
    while i < bits.len() {
        if !bits[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < bits.len() && bits[i] {
            i += 1;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        write!(out, "{} {}", start + 1, i - start).expect("writing to String");
    }
    out
}

/// `(start, length)` pairs of an RLE string, 1-based starts.
pub fn parse_runs(text: &str) -> Result<Vec<(usize, usize)>, RleError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if !tokens.len().is_multiple_of(2) {
        return Err(RleError::Malformed(format!(
            "odd token count {}",
            tokens.len()
        )));
    }
    let num = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| RleError::Malformed(format!("not a non-negative integer: {t:?}")))
    };
    tokens
        .chunks(2)
        .map(|pair| {
            let (start, length) = (num(pair[0])?, num(pair[1])?);
            if start == 0 {
                return Err(RleError::Malformed("starts are 1-based".into()));
            }
            if length == 0 {
                return Err(RleError::Malformed(format!("zero-length run at {start}")));
            }
            Ok((start, length))
        })
        .collect()
}

pub fn rle_decode(text: &str, height: usize, width: usize) -> Result<BitMask, RleError> {
    if height == 0 || width == 0 {
        return Err(RleError::EmptyDimensions);
    }
    let size = height * width;
    let mut bits = vec![false; size];
    for (start, length) in parse_runs(text)? {
        if start - 1 + length > size {
            return Err(RleError::OutOfBounds {
                start,
                length,
                size,
            });
        }
        for b in &mut bits[start - 1..start - 1 + length] {
            if *b {
                return Err(RleError::OverlappingRuns(start));
            }
            *b = true;
        }
    }
    Ok(BitMask::from_bits(height, width, bits).expect("extents checked"))
}
