//! Directory-level train / predict / render steps used by the CLI.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::{list_records, read_cube, read_label};
use super::synth::labeled_frame;
use super::fusion::predict_fused_inputs;
use super::PipelineError;
use crate::autodiff::{load_checkpoint, save_checkpoint, Tensor};
use crate::falsecolor::{
    ash_rgb, compute_channel_stats, default_model_channels, model_input_stack, BandCube, ChannelSpec,
    ChannelStats, SpreadMode,
};
use crate::maskops::BitMask;
use crate::models::{
    filter_positive, split_kfold, train, Architecture, EpochRecord, ModelConfig, ModelError, Network, Sample,
    TrainConfig, TrainOutcome,
};
use crate::scalar::Real;

pub const HISTORY_FILE: &str = "history.csv";
pub const EPOCH_DIR: &str = "epochs";

/// Everything `contrail train` reads from its config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub architecture: Architecture,
    pub base_width: usize,
    pub depth: usize,
    /// Comma-separated channel list, e.g. `"11,13,14,15,15-14,14-11"`.
    pub channels: String,
    /// `"stddev"` or `"variance"`.
    pub spread: String,
    /// Number of cross-validation folds; below 2 trains on everything.
    pub folds: usize,
    /// Fold held out for validation.
    pub fold: usize,
    /// Drop training records whose label is empty.
    pub positive_only: bool,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            architecture: Architecture::UnetTiny,
            base_width: 8,
            depth: 3,
            channels: default_model_channels()
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            spread: "stddev".into(),
            folds: 5,
            fold: 0,
            positive_only: false,
            train: TrainConfig::default(),
        }
    }
}

impl TrainSettings {
    /// Parse a flat TOML config; unknown keys are an error.
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let table: toml::Table = toml::from_str(text)?;
        let known = toml::Table::try_from(Self::default()).map_err(|e| PipelineError::BadConfig(e.to_string()))?;
        if let Some(k) = table.keys().find(|k| !known.contains_key(*k)) {
            return Err(PipelineError::BadConfig(format!("unknown key {k:?}")));
        }
        let s: Self = table.try_into()?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.train.validate()?;
        self.model_config()?.validate()?;
        self.spread_mode()?;
        if self.folds >= 2 && self.fold >= self.folds {
            return Err(PipelineError::BadConfig(format!("fold {} of {}", self.fold, self.folds)));
        }
        Ok(())
    }

    pub fn channel_specs(&self) -> Result<Vec<ChannelSpec>, PipelineError> {
        let specs = self
            .channels
            .split(',')
            .map(ChannelSpec::parse)
            .collect::<Result<Vec<_>, _>>()?;
        if specs.is_empty() {
            return Err(PipelineError::BadConfig("no input channels".into()));
        }
        Ok(specs)
    }

    pub fn spread_mode(&self) -> Result<SpreadMode, PipelineError> {
        match self.spread.as_str() {
            "stddev" => Ok(SpreadMode::StdDev),
            "variance" => Ok(SpreadMode::Variance),
            other => Err(PipelineError::BadConfig(format!("spread {other:?}"))),
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig, PipelineError> {
        let n = self.channel_specs()?.len();
        let mut c = ModelConfig::unet_tiny(n, self.base_width, self.depth);
        c.architecture = self.architecture;
        Ok(c)
    }
}

/// Input channels and their standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct InputSpec {
    pub channels: Vec<ChannelSpec>,
    pub stats: Vec<ChannelStats>,
}

impl InputSpec {
    /// `[C, H, W]` model input for the labeled frame of `cube`.
    pub fn input<T: Real>(&self, cube: &BandCube<T>) -> Result<Tensor<T>, PipelineError> {
        Ok(model_input_stack(cube, labeled_frame(cube.frames()), &self.channels, &self.stats)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    channels: Vec<String>,
    stats: Vec<ChannelStats>,
    train: TrainConfig,
    epoch: usize,
}

/// A trained network plus the input preparation it expects.
#[derive(Debug, Clone)]
pub struct LoadedModel<T> {
    pub net: Network<T>,
    pub input: InputSpec,
}

pub fn save_model<T: Real>(
    dir: &Path,
    net: &Network<T>,
    input: &InputSpec,
    train_cfg: &TrainConfig,
    epoch: usize,
) -> Result<(), PipelineError> {
    let meta = CheckpointMeta {
        model: net.config().clone(),
        channels: input.channels.iter().map(ToString::to_string).collect(),
        stats: input.stats.clone(),
        train: train_cfg.clone(),
        epoch,
    };
    save_checkpoint(dir, net.params(), &serde_json::to_value(meta)?)?;
    Ok(())
}

pub fn load_model<T: Real>(dir: &Path) -> Result<LoadedModel<T>, PipelineError> {
    let (params, meta) = load_checkpoint(dir)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)?;
    let channels = meta
        .channels
        .iter()
        .map(|c| ChannelSpec::parse(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LoadedModel {
        net: Network::from_params(&meta.model, params)?,
        input: InputSpec {
            channels,
            stats: meta.stats,
        },
    })
}

/// `epoch,loss,val_dice,lr`; an absent validation score is an empty cell.
pub fn history_csv(history: &[EpochRecord]) -> Result<String, PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epoch", "loss", "val_dice", "lr"])?;
    for r in history {
        let dice = r.val_dice.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([r.epoch.to_string(), r.loss.to_string(), dice, r.lr.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 input is utf-8"))
}

fn write_file(path: &Path, contents: &str) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Labeled scenes of a data directory, sorted by record id.
pub fn load_scenes<T: Real>(data_dir: &Path) -> Result<Vec<(String, BandCube<T>, BitMask)>, PipelineError> {
    list_records(data_dir)?
        .into_iter()
        .map(|(id, dir)| Ok((id, read_cube(&dir)?, read_label(&dir)?)))
        .collect()
}

/// Train on `data_dir`, writing the final checkpoint to `out_dir`, one
/// checkpoint per epoch under `out_dir/epochs/epoch_NNN` and the history
/// to `out_dir/history.csv`.
pub fn train_from_dir<T: Real>(
    settings: &TrainSettings,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<TrainOutcome, PipelineError> {
    settings.validate()?;
    let scenes = load_scenes::<T>(data_dir)?;
    let ids: Vec<String> = scenes.iter().map(|(id, _, _)| id.clone()).collect();
    let val_ids: BTreeSet<String> = if settings.folds >= 2 {
        split_kfold(&ids, settings.folds, settings.train.seed)?.swap_remove(settings.fold).into_iter().collect()
    } else {
        BTreeSet::new()
    };
    let (val, train_scenes): (Vec<_>, Vec<_>) = scenes.iter().partition(|(id, _, _)| val_ids.contains(id));

    let channels = settings.channel_specs()?;
    let frames: Vec<(&BandCube<T>, usize)> = train_scenes
        .iter()
        .map(|(_, c, _)| (c, labeled_frame(c.frames())))
        .collect();
    let stats = compute_channel_stats(&frames, &channels, settings.spread_mode()?)?;
    let input = InputSpec { channels, stats };
    let to_samples = |set: &[&(String, BandCube<T>, BitMask)]| -> Result<Vec<Sample<T>>, PipelineError> {
        set.iter()
            .map(|(_, cube, mask)| {
                Ok(Sample {
                    input: input.input(cube)?,
                    mask: mask.clone(),
                })
            })
            .collect()
    };
    let mut train_set = to_samples(&train_scenes)?;
    if settings.positive_only {
        train_set = filter_positive(train_set);
    }
    let val_set = to_samples(&val)?;

    let mut net = Network::<T>::build(&settings.model_config()?, settings.train.seed)?;
    let epoch_root = out_dir.join(EPOCH_DIR);
    let mut history = Vec::new();
    let outcome = train(&mut net, &train_set, &val_set, &settings.train, |rec, net| {
        let dir = epoch_root.join(format!("epoch_{:03}", rec.epoch));
        history.push(rec.clone());
        save_model(&dir, net, &input, &settings.train, rec.epoch)
            .and_then(|_| history_csv(&history))
            .and_then(|text| write_file(&out_dir.join(HISTORY_FILE), &text))
            .map_err(|e| e.to_string())
    })?;
    save_model(out_dir, &net, &input, &settings.train, settings.train.epochs)?;
    write_file(&out_dir.join(HISTORY_FILE), &history_csv(&outcome.history)?)?;
    Ok(outcome)
}

/// Fused prediction for every record under `data_dir`, sorted by id.
pub fn predict_dir<T: Real>(
    models: &[LoadedModel<T>],
    data_dir: &Path,
    threshold: f64,
) -> Result<Vec<(String, BitMask)>, PipelineError> {
    let mut out = Vec::new();
    for (id, dir) in list_records(data_dir)? {
        let cube = read_cube::<T>(&dir)?;
        let inputs = models
            .iter()
            .map(|m| {
                let x = m.input.input(&cube)?;
                let shape = [&[1], x.shape()].concat();
                Ok(x.reshape(shape).map_err(ModelError::from)?)
            })
            .collect::<Result<Vec<Tensor<T>>, PipelineError>>()?;
        let members: Vec<_> = models.iter().zip(&inputs).map(|(m, x)| (&m.net, x)).collect();
        let mask = predict_fused_inputs(&members, threshold)?.swap_remove(0);
        out.push((id, mask));
    }
    Ok(out)
}

/// Render the ash false-color image of one frame (default: the labeled one).
pub fn render_record(dir: &Path, frame: Option<usize>, out: &Path) -> Result<PathBuf, PipelineError> {
    let cube = read_cube::<f64>(dir)?;
    let img = ash_rgb(&cube, frame.unwrap_or(labeled_frame(cube.frames())))?;
    img.save_png(out)?;
    Ok(out.to_path_buf())
}
