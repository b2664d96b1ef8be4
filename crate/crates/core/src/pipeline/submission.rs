//! Submission files: `record_id,encoded_pixels`, one row per record, `-` for
//! an empty mask.

use std::collections::HashSet;

use super::PipelineError;
use crate::maskops::{rle_decode, rle_encode, BitMask};

pub const SUBMISSION_HEADER: [&str; 2] = ["record_id", "encoded_pixels"];
pub const EMPTY_MASK: &str = "-";

/// CSV text for `results`, rows in input order.
pub fn write_submission(results: &[(String, BitMask)]) -> Result<String, PipelineError> {
    let mut seen = HashSet::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUBMISSION_HEADER)?;
    for (id, mask) in results {
        if !seen.insert(id.as_str()) {
            return Err(PipelineError::DuplicateId(id.clone()));
        }
        let rle = rle_encode(mask);
        let cell = if rle.is_empty() { EMPTY_MASK } else { rle.as_str() };
        w.write_record([id.as_str(), cell])?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 input is utf-8"))
}

/// `(record_id, encoded_pixels)` rows; `-` is returned as an empty string.
pub fn parse_submission(text: &str) -> Result<Vec<(String, String)>, PipelineError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SUBMISSION_HEADER {
        return Err(PipelineError::MalformedSubmission(format!("header is {header:?}")));
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for row in r.records() {
        let row = row?;
        let (Some(id), Some(enc), 2) = (row.get(0), row.get(1), row.len()) else {
            return Err(PipelineError::MalformedSubmission(format!("row {row:?}")));
        };
        if !seen.insert(id.to_string()) {
            return Err(PipelineError::DuplicateId(id.to_string()));
        }
        let enc = if enc.trim() == EMPTY_MASK { "" } else { enc };
        rows.push((id.to_string(), enc.to_string()));
    }
    Ok(rows)
}

/// Decode one submission cell against known dimensions.
pub fn decode_cell(encoded: &str, height: usize, width: usize) -> Result<BitMask, PipelineError> {
    Ok(rle_decode(encoded, height, width)?)
}
