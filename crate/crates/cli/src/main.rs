use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use contrail_core::maskops::RuleOptions;
use contrail_core::pipeline::{
    evaluate_submission, load_model, predict_dir, render_record, synth_generate, train_from_dir,
    validate_labels, write_record, write_submission, SyntheticSceneSpec, TrainSettings,
};

/// Contrail segmentation toolkit.
#[derive(Debug, Parser)]
#[command(name = "contrail", version)]
struct Cli {
    /// Seed overriding the one in the config. Commands that draw no random
    /// numbers accept and ignore it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the ash false-color PNG of one record.
    Render {
        /// Record directory holding band_NN.npy files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Frame index; defaults to the labeled (penultimate) frame.
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Generate synthetic records.
    Synth {
        /// TOML scene spec; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fused inference over a data directory, written as a submission CSV.
    Predict {
        /// Comma-separated checkpoint directories.
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.75)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a submission against truth masks; prints a JSON report.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check every labeled track against the four contrail rules.
    ValidateLabels {
        #[arg(long)]
        data: PathBuf,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Render { input, out, frame } => {
            render_record(&input, frame, &out)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Synth { spec, n, out } => {
            let mut spec = match spec {
                Some(p) => SyntheticSceneSpec::from_toml(&read_text(&p)?)?,
                None => SyntheticSceneSpec::default(),
            };
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for rec in synth_generate::<f32>(&spec, n)? {
                write_record(&out, &rec)?;
            }
            eprintln!("wrote {n} records to {}", out.display());
        }
        Command::Train { config, data, out } => {
            let mut settings = match config {
                Some(p) => TrainSettings::from_toml(&read_text(&p)?)?,
                None => TrainSettings::default(),
            };
            if let Some(s) = cli.seed {
                settings.train.seed = s;
            }
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let outcome = train_from_dir::<f32>(&settings, &data, &out)?;
            for r in &outcome.history {
                let dice = r.val_dice.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into());
                eprintln!("epoch {:>3}  loss {:.5}  val_dice {dice}  lr {:.3e}", r.epoch, r.loss, r.lr);
            }
        }
        Command::Predict {
            models,
            data,
            threshold,
            out,
        } => {
            if models.is_empty() {
                bail!("--models needs at least one checkpoint");
            }
            let loaded = models
                .iter()
                .map(|m| load_model::<f32>(m).with_context(|| format!("loading {}", m.display())))
                .collect::<Result<Vec<_>>>()?;
            let results = predict_dir(&loaded, &data, threshold)?;
            fs::write(&out, write_submission(&results)?).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} rows to {}", results.len(), out.display());
        }
        Command::Eval { pred, truth, out } => {
            let report = evaluate_submission(&read_text(&pred)?, &truth)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                fs::write(&out, &json).with_context(|| format!("writing {}", out.display()))?;
            }
            println!("{json}");
        }
        Command::ValidateLabels { data } => {
            let report = validate_labels(&data, &RuleOptions::default())?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.tracks_valid != report.tracks_checked {
                bail!(
                    "{} of {} tracks break the labeling rules",
                    report.tracks_checked - report.tracks_valid,
                    report.tracks_checked
                );
            }
        }
    }
    Ok(())
}
