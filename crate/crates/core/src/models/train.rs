use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::Labeled;
use super::optim::{adamw_step, lr_at, OptState};
use super::{ModelError, Network, TrainConfig};
use crate::autodiff::{Tape, Tensor};
use crate::maskops::BitMask;
use crate::metrics;
use crate::scalar::Real;

/// A normalized `[C, H, W]` input with its label.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub input: Tensor<T>,
    pub mask: BitMask,
}

impl<T> Labeled for Sample<T> {
    fn label(&self) -> &BitMask {
        &self.mask
    }
}

impl<T> Labeled for &Sample<T> {
    fn label(&self) -> &BitMask {
        &self.mask
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub loss: f64,
    /// Global Dice on the validation set, if there is one.
    pub val_dice: Option<f64>,
    /// Learning rate of the last step of the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
}

fn batch_tensors<T: Real>(batch: &[&Sample<T>]) -> Result<(Tensor<T>, Vec<usize>), ModelError> {
    let inputs: Vec<&Tensor<T>> = batch.iter().map(|s| &s.input).collect();
    let x = Tensor::stack(&inputs)?;
    let mut target = Vec::with_capacity(batch.len() * batch[0].mask.len());
    for s in batch {
        let shape = s.input.shape();
        if shape.len() != 3 || (shape[1], shape[2]) != s.mask.dims() {
            return Err(ModelError::ShapeMismatch(format!(
                "input {:?} with mask {:?}",
                shape,
                s.mask.dims()
            )));
        }
        target.extend(s.mask.bits().iter().map(|&b| usize::from(b)));
    }
    Ok((x, target))
}

/// One optimizer step on `batch`; returns the batch loss.
fn train_step<T: Real>(
    net: &mut Network<T>,
    batch: &[&Sample<T>],
    state: &mut OptState<T>,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<f64, ModelError> {
    let (x, target) = batch_tensors(batch)?;
    let weights = cfg.class_weights().map(T::of);
    let mut tape = Tape::new();
    let (loss, params) = net.loss(&mut tape, &x, &target, &weights)?;
    let value = tape.value(loss).item()?.as_f64();
    let grads = tape.backward(loss)?;
    let grads: Vec<Tensor<T>> = params.iter().map(|&p| grads.tensor(p)).collect();
    adamw_step(net.params_mut(), &grads, state, cfg, lr)?;
    Ok(value)
}

/// Train `net` in place. Batches are drawn from a `cfg.seed`-shuffled order
/// each epoch; `on_epoch` sees every history row and the current weights and
/// may abort training by returning an error.
pub fn train<T, F>(
    net: &mut Network<T>,
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome, ModelError>
where
    T: Real,
    F: FnMut(&EpochRecord, &Network<T>) -> Result<(), String>,
{
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let per_epoch = train_set.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptState::new(net.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut lr = cfg.learning_rate;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            lr = lr_at(step, total, cfg);
            let l = train_step(net, &batch, &mut state, cfg, lr)?;
            step_losses.push(l);
            sum += l;
            step += 1;
        }
        let val_dice = if val_set.is_empty() {
            None
        } else {
            Some(evaluate_dice(net, val_set, cfg.threshold, cfg.batch_size)?)
        };
        let rec = EpochRecord {
            epoch,
            loss: sum / per_epoch as f64,
            val_dice,
            lr,
        };
        on_epoch(&rec, net).map_err(ModelError::Callback)?;
        history.push(rec);
    }
    Ok(TrainOutcome {
        history,
        step_losses,
    })
}

/// Threshold (strictly greater) each sample's contrail probability.
pub fn predict_masks<T: Real>(
    net: &Network<T>,
    samples: &[Sample<T>],
    threshold: f64,
    batch_size: usize,
) -> Result<Vec<BitMask>, ModelError> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let inputs: Vec<&Tensor<T>> = chunk.iter().map(|s| &s.input).collect();
        let probs = net.predict_proba(&Tensor::stack(&inputs)?)?;
        let t = T::of(threshold);
        for (i, s) in chunk.iter().enumerate() {
            let (h, w) = s.mask.dims();
            let p = probs.index_outer(i);
            let bits = p.data().iter().map(|&v| v > t).collect();
            out.push(BitMask::from_bits(h, w, bits).map_err(|e| ModelError::ShapeMismatch(e.to_string()))?);
        }
    }
    Ok(out)
}

/// Global Dice of thresholded predictions against the sample masks.
pub fn evaluate_dice<T: Real>(
    net: &Network<T>,
    samples: &[Sample<T>],
    threshold: f64,
    batch_size: usize,
) -> Result<f64, ModelError> {
    let preds = predict_masks(net, samples, threshold, batch_size)?;
    metrics::dice_global(preds.iter().zip(samples.iter().map(|s| &s.mask)))
        .map_err(|e| ModelError::ShapeMismatch(e.to_string()))
}
