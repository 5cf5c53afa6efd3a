use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hsk_core::matchedfilter::{iterate_mf, MfSettings};
use hsk_core::nn::{
    train, HyperSegFormer, ModelConfig, TrainConfig, TrainOptions, TrainSample, Variant,
    BEST_CHECKPOINT, DEFAULT_BATCH, DEFAULT_EPOCHS, LAST_CHECKPOINT, TRANSFORMER_LR,
};
use hsk_core::simulate::{read_samples, resample_signature, Split, SyntheticSample};
use hsk_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, require, set};
use crate::manifest::Recorder;
use crate::simulate::{load_signature, SIGNATURE_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Dims {
    /// Desk-scale widths.
    Toy,
    /// B0-sized encoder and decoder.
    B0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCliConfig {
    /// Dataset manifest (`dataset.json`).
    pub data: Option<PathBuf>,
    pub variant: Variant,
    pub spectral: bool,
    pub dims: Dims,
    /// Positive-class prior used to initialize the classifier bias.
    pub prior: Option<f64>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub oversample_positives: bool,
    /// Weight pixel losses by the matched-filter product of each tile.
    pub mf_loss_weight: bool,
}

impl Default for TrainCliConfig {
    fn default() -> Self {
        Self {
            data: None,
            variant: Variant::ConvUpStride,
            spectral: true,
            dims: Dims::Toy,
            prior: Some(0.01),
            learning_rate: TRANSFORMER_LR,
            batch_size: DEFAULT_BATCH,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            oversample_positives: true,
            mf_loss_weight: false,
        }
    }
}

impl TrainCliConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            oversample_positives: self.oversample_positives,
            mf_loss_weight: self.mf_loss_weight,
        }
    }

    pub fn model_config(&self, in_bands: usize, classes: usize) -> ModelConfig {
        let base = match self.dims {
            Dims::Toy => ModelConfig::toy(in_bands, self.variant, self.spectral),
            Dims::B0 => ModelConfig::b0(in_bands, self.variant, self.spectral),
        };
        ModelConfig {
            num_classes: classes,
            multi_hot: classes > 1,
            prior_probability: self.prior,
            ..base
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Checkpoint directory; receives `last.ckpt`, `best.ckpt`, `history.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Spectral 1×1 layer in every encoder block.
    #[arg(long)]
    pub spectral: Option<bool>,
    #[arg(long, value_enum)]
    pub dims: Option<Dims>,
    /// Classifier prior probability, in (0, 1).
    #[arg(long)]
    pub prior: Option<f64>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Oversample tiles that contain plume pixels.
    #[arg(long)]
    pub oversample: Option<bool>,
    #[arg(long)]
    pub mf_loss_weight: Option<bool>,
    /// Ignore an existing `last.ckpt` and start over.
    #[arg(long)]
    pub fresh: bool,
    /// Stop after this many epochs as if interrupted.
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn resolve(args: &TrainArgs) -> Result<TrainCliConfig> {
    let mut c: TrainCliConfig = config::load(args.config.as_deref(), "train")?;
    if args.data.is_some() {
        c.data = args.data.clone();
    }
    set(&mut c.variant, args.variant);
    set(&mut c.spectral, args.spectral);
    set(&mut c.dims, args.dims);
    if args.prior.is_some() {
        c.prior = args.prior;
    }
    set(&mut c.learning_rate, args.lr);
    set(&mut c.batch_size, args.batch_size);
    set(&mut c.epochs, args.epochs);
    set(&mut c.seed, args.seed);
    set(&mut c.oversample_positives, args.oversample);
    set(&mut c.mf_loss_weight, args.mf_loss_weight);
    Ok(c)
}

/// `1 + clamp(α̂ / 1750, 0, 2)` from the default matched filter.
fn mf_weights(sample: &SyntheticSample<f32>, s: &[f64]) -> Result<Vec<f32>> {
    let d = MfSettings::default();
    let alpha = iterate_mf(&sample.cube.cast::<f64>(), s, d.iterations, d.lambda)?;
    Ok(alpha
        .alpha()
        .iter()
        .map(|&a| 1.0 + (a / 1750.0).clamp(0.0, 2.0) as f32)
        .collect())
}

fn to_train(
    samples: Vec<SyntheticSample<f32>>,
    weights: Option<&[f64]>,
) -> Result<Vec<TrainSample>> {
    samples
        .into_iter()
        .map(|s| {
            let pixel_weights = match weights {
                Some(sig) => Some(mf_weights(&s, sig)?),
                None => None,
            };
            Ok(TrainSample {
                cube: s.cube,
                label: s.label,
                pixel_weights,
            })
        })
        .collect()
}

pub fn run(args: TrainArgs) -> Result<()> {
    let c = resolve(&args)?;
    let Some(data) = c.data.clone() else {
        return Err(Error::InvalidArgument("--data is required".into()));
    };
    require(&data, "dataset manifest")?;
    let train_raw: Vec<SyntheticSample<f32>> = read_samples(&data, Split::Train)?;
    let val_raw: Vec<SyntheticSample<f32>> = read_samples(&data, Split::Val)?;
    let Some(first) = train_raw.first() else {
        return Err(Error::InvalidArgument(format!(
            "{} has no training tiles",
            data.display()
        )));
    };
    let model_cfg = c.model_config(first.cube.bands(), first.label.classes());
    let sig_values = if c.mf_loss_weight {
        let sig = dataset_signature(&data)?;
        Some(resample_signature::<f64>(&sig, first.cube.band_centers()))
    } else {
        None
    };
    let train_set = to_train(train_raw, sig_values.as_deref())?;
    let val_set = to_train(val_raw, None)?;

    let mut rec = Recorder::new("train", &args.out)?;
    rec.input(&data);
    let mut model = HyperSegFormer::new(model_cfg, c.seed)?;
    let opts = TrainOptions {
        checkpoint_dir: Some(args.out.clone()),
        resume: !args.fresh,
        stop_after: args.stop_after,
    };
    let outcome = train(&mut model, &train_set, &val_set, &c.train_config(), &opts)?;
    let history =
        serde_json::to_string_pretty(&outcome.history).map_err(|e| Error::Format(e.to_string()))?;
    let history_path = rec.output("history.json");
    std::fs::write(&history_path, history + "\n").map_err(|e| Error::Io {
        path: history_path,
        source: e,
    })?;
    for name in [LAST_CHECKPOINT, BEST_CHECKPOINT] {
        if rec.dir().join(name).exists() {
            rec.output(name);
        }
    }
    rec.finish(&c, Some(c.seed))?;
    for e in &outcome.history {
        println!(
            "epoch {:>3}  train {:.5}  val {:.5}",
            e.epoch + 1,
            e.train_loss,
            e.val_loss
        );
    }
    match outcome.best_epoch {
        Some(b) if outcome.completed => println!(
            "{} params, best epoch {} (val {:.5})",
            model.param_count(),
            b + 1,
            outcome.best_val_loss.unwrap_or(f64::NAN)
        ),
        _ => println!(
            "stopped after {} epochs; rerun to resume",
            outcome.history.len()
        ),
    }
    Ok(())
}

/// The signature `simulate` stored next to the manifest, else the bundled one.
fn dataset_signature(data: &Path) -> Result<hsk_core::simulate::SpectralSignature> {
    let stored = data.parent().map(|d| d.join(SIGNATURE_FILE));
    match stored {
        Some(p) if p.exists() => load_signature(Some(&p)),
        _ => load_signature(None),
    }
}
