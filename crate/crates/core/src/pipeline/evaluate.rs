use std::path::Path;

use rayon::prelude::*;

use super::records::read_label;
use super::submission::{decode_cell, parse_submission};
use super::PipelineError;
use crate::maskops::BitMask;
use crate::metrics::EvalReport;

/// Score a submission against `truth_dir/<record_id>/human_pixel_masks.npy`.
/// Records are reported sorted by id.
pub fn evaluate_submission(text: &str, truth_dir: &Path) -> Result<EvalReport, PipelineError> {
    let mut rows = parse_submission(text)?;
    rows.sort();
    let pairs: Vec<(String, BitMask, BitMask)> = rows
        .into_par_iter()
        .map(|(id, enc)| {
            let dir = truth_dir.join(&id);
            if !dir.is_dir() {
                return Err(PipelineError::MissingTruth(id));
            }
            let truth = read_label(&dir)?;
            let (h, w) = truth.dims();
            let pred = decode_cell(&enc, h, w)?;
            Ok((id, pred, truth))
        })
        .collect::<Result<_, _>>()?;
    Ok(EvalReport::from_pairs(
        pairs.iter().map(|(id, p, t)| (id.as_str(), p, t)),
    )?)
}
