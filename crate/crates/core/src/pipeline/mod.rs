//! End-to-end plumbing: synthetic records, record directories, fused
//! inference, submissions, evaluation and label checks.

mod evaluate;
mod fusion;
mod labels;
mod records;
mod submission;
mod synth;
mod workflow;

use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::CheckpointError;
use crate::falsecolor::FalseColorError;
use crate::maskops::{MaskError, RleError};
use crate::metrics::MetricsError;
use crate::models::ModelError;
use crate::npy::NpyError;

pub use evaluate::evaluate_submission;
pub use fusion::{mean_probability, predict_fused, predict_fused_inputs, threshold_masks};
pub use labels::{validate_labels, LabelReport, RecordCheck, TrackCheck};
pub use records::{list_records, read_cube, read_label, read_record, read_tracks, write_record, INSTANCE_FILE, LABEL_FILE};
pub use submission::{decode_cell, parse_submission, write_submission, EMPTY_MASK, SUBMISSION_HEADER};
pub use synth::{labeled_frame, synth_generate, RecordBundle, SyntheticSceneSpec, SYNTH_BANDS};
pub use workflow::{
    history_csv, load_model, load_scenes, predict_dir, render_record, save_model, train_from_dir, InputSpec,
    LoadedModel, TrainSettings, EPOCH_DIR, HISTORY_FILE,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error(transparent)]
    FalseColor(#[from] FalseColorError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("malformed RLE: {0}")]
    Rle(#[from] RleError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("bad synthetic scene spec: {0}")]
    BadSpec(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("no models given")]
    EmptyModelList,
    #[error("threshold {0} outside (0, 1)")]
    BadThreshold(f64),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("no truth mask for {0}")]
    MissingTruth(String),
    #[error("malformed submission: {0}")]
    MalformedSubmission(String),
    #[error("bad record: {0}")]
    BadRecord(String),
}
