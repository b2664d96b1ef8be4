//! Pixel confusion counts, overlap scores and dataset-level aggregation.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maskops::BitMask;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction is {pred:?}, truth is {truth:?}")]
    ShapeMismatch {
        pred: (usize, usize),
        truth: (usize, usize),
    },
}

/// Pixel counts. Forms a commutative monoid under `+`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub fn confusion(pred: &BitMask, truth: &BitMask) -> Result<ConfusionCounts, MetricsError> {
    if pred.dims() != truth.dims() {
        return Err(MetricsError::ShapeMismatch {
            pred: pred.dims(),
            truth: truth.dims(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2·tp / (2·tp + fp + fn)`; 1 when both masks are empty.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    }
}

/// `tp / (tp + fp + fn)`; 1 when both masks are empty.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `tp / (tp + fp)`; 1 when nothing was predicted.
pub fn precision(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fp;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// `tp / (tp + fn)`; 1 when the truth is empty.
pub fn recall(c: &ConfusionCounts) -> f64 {
    let denom = c.tp + c.fn_;
    if denom == 0 {
        1.0
    } else {
        c.tp as f64 / denom as f64
    }
}

/// How per-pair scores combine into one dataset number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Score of the summed confusion counts.
    #[default]
    Global,
    /// Mean of per-pair scores.
    PerImageMean,
}

fn pair_counts<'a, I>(pairs: I) -> Result<Vec<ConfusionCounts>, MetricsError>
where
    I: IntoIterator<Item = (&'a BitMask, &'a BitMask)>,
{
    pairs.into_iter().map(|(p, t)| confusion(p, t)).collect()
}

/// Dice over summed counts; 1 for an empty list.
pub fn dice_global<'a, I>(pairs: I) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a BitMask, &'a BitMask)>,
{
    dice_aggregate(pairs, Aggregation::Global)
}

pub fn dice_aggregate<'a, I>(pairs: I, mode: Aggregation) -> Result<f64, MetricsError>
where
    I: IntoIterator<Item = (&'a BitMask, &'a BitMask)>,
{
    let counts = pair_counts(pairs)?;
    Ok(match mode {
        Aggregation::Global => dice(&counts.iter().copied().sum()),
        Aggregation::PerImageMean if counts.is_empty() => 1.0,
        Aggregation::PerImageMean => {
            counts.iter().map(dice).sum::<f64>() / counts.len() as f64
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub record_id: String,
    pub dice: f64,
    pub iou: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Evaluation report; serializes to
/// `{global_dice, global_iou, per_record: [{record_id, dice, iou, tp, fp, fn}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub global_dice: f64,
    pub global_iou: f64,
    pub per_record: Vec<RecordScore>,
}

impl EvalReport {
    /// Scores `(record_id, pred, truth)` triples; records are reported in
    /// input order.
    pub fn from_pairs<'a, I>(items: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (&'a str, &'a BitMask, &'a BitMask)>,
    {
        let mut total = ConfusionCounts::default();
        let mut per_record = Vec::new();
        for (id, pred, truth) in items {
            let c = confusion(pred, truth)?;
            total += c;
            per_record.push(RecordScore {
                record_id: id.to_string(),
                dice: dice(&c),
                iou: iou(&c),
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
            });
        }
        Ok(Self {
            global_dice: dice(&total),
            global_iou: iou(&total),
            per_record,
        })
    }

    pub fn mean_dice(&self) -> f64 {
        if self.per_record.is_empty() {
            1.0
        } else {
            self.per_record.iter().map(|r| r.dice).sum::<f64>() / self.per_record.len() as f64
        }
    }
}
