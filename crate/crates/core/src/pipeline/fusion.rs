//! Ensemble inference: average the contrail probability of several models and
//! threshold it.

use super::PipelineError;
use crate::autodiff::Tensor;
use crate::maskops::BitMask;
use crate::models::Network;
use crate::scalar::Real;

/// Per-pixel mean of `[N, H, W]` probability maps. Each pixel's values are
/// summed in ascending order, so the result does not depend on the order of
/// `maps`.
pub fn mean_probability<T: Real>(maps: &[Tensor<T>]) -> Result<Tensor<T>, PipelineError> {
    let first = maps.first().ok_or(PipelineError::EmptyModelList)?;
    if let Some(m) = maps.iter().find(|m| m.shape() != first.shape()) {
        return Err(PipelineError::BadRecord(format!(
            "probability maps {:?} and {:?} differ in shape",
            first.shape(),
            m.shape()
        )));
    }
    let n = T::of(maps.len() as f64);
    let mut column = Vec::with_capacity(maps.len());
    let data = (0..first.len())
        .map(|i| {
            column.clear();
            column.extend(maps.iter().map(|m| m.data()[i]));
            column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            column.iter().copied().sum::<T>() / n
        })
        .collect();
    Ok(Tensor::new(first.shape().to_vec(), data).map_err(crate::models::ModelError::from)?)
}

/// One mask per batch item: pixels whose probability is strictly above
/// `threshold`.
pub fn threshold_masks<T: Real>(probs: &Tensor<T>, threshold: f64) -> Result<Vec<BitMask>, PipelineError> {
    let [n, h, w] = probs.shape()[..] else {
        return Err(PipelineError::BadRecord(format!("expected [N, H, W], got {:?}", probs.shape())));
    };
    let t = T::of(threshold);
    (0..n)
        .map(|i| {
            let bits = probs.data()[i * h * w..(i + 1) * h * w].iter().map(|&p| p > t).collect();
            Ok(BitMask::from_bits(h, w, bits)?)
        })
        .collect()
}

fn check_threshold(threshold: f64) -> Result<(), PipelineError> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(PipelineError::BadThreshold(threshold))
    }
}

/// Fused masks of `models` on one shared `[N, C, H, W]` input.
pub fn predict_fused<T: Real>(
    models: &[&Network<T>],
    input: &Tensor<T>,
    threshold: f64,
) -> Result<Vec<BitMask>, PipelineError> {
    check_threshold(threshold)?;
    if models.is_empty() {
        return Err(PipelineError::EmptyModelList);
    }
    let maps = models
        .iter()
        .map(|m| m.predict_proba(input))
        .collect::<Result<Vec<_>, _>>()?;
    threshold_masks(&mean_probability(&maps)?, threshold)
}

/// Like [`predict_fused`] but each model gets its own input (models trained
/// with different channel statistics).
pub fn predict_fused_inputs<T: Real>(
    members: &[(&Network<T>, &Tensor<T>)],
    threshold: f64,
) -> Result<Vec<BitMask>, PipelineError> {
    check_threshold(threshold)?;
    if members.is_empty() {
        return Err(PipelineError::EmptyModelList);
    }
    let maps = members
        .iter()
        .map(|(m, x)| m.predict_proba(x))
        .collect::<Result<Vec<_>, _>>()?;
    threshold_masks(&mean_probability(&maps)?, threshold)
}
