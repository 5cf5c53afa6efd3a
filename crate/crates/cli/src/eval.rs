use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hsk_core::datacube::{load_cube, load_mask, load_score_map, tile_grid, BinaryMask, ScoreMap};
use hsk_core::matchedfilter::MorphKernel;
use hsk_core::metrics::{EvalReport, EvalSettings, Task, TileOutcome};
use hsk_core::nn::{infer, load_model, predict_tile, HyperSegFormer};
use hsk_core::simulate::{DatasetManifest, Split};
use hsk_core::{Cube, Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, require, set};
use crate::manifest::Recorder;
use crate::mf::{filter_cube, parse_kernel, parse_split, tile_stem, MfConfig};
use crate::simulate::load_signature;

/// Where predictions come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    /// A trained checkpoint.
    Checkpoint,
    /// The matched-filter baseline.
    Mf,
    /// Saved score maps named `<tile>score.hdr.json`.
    Predictions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskArg {
    Auto,
    Methane,
    Minerals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub data: Option<PathBuf>,
    pub split: Split,
    pub source: Source,
    pub checkpoint: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub task: TaskArg,
    /// Class names; `methane` or `class<i>` when unset.
    pub classes: Option<Vec<String>>,
    /// Row label in the report.
    pub name: Option<String>,
    /// Score binarization cut for checkpoints and saved predictions.
    pub threshold: f64,
    pub fpr_min_pixels: usize,
    pub strong_threshold: usize,
    pub auprc_thresholds: usize,
    /// Inference tile size; whole cubes when unset.
    pub tile: Option<usize>,
    pub overlap: usize,
    pub batch_size: usize,
    /// Matched-filter settings for `source = mf`.
    pub mf: MfConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let s = EvalSettings::default();
        Self {
            data: None,
            split: Split::Test,
            source: Source::Checkpoint,
            checkpoint: None,
            predictions: None,
            task: TaskArg::Auto,
            classes: None,
            name: None,
            threshold: s.threshold,
            fpr_min_pixels: s.fpr_min_pixels,
            strong_threshold: s.strong_threshold,
            auprc_thresholds: s.auprc_thresholds,
            tile: None,
            overlap: 0,
            batch_size: 8,
            mf: MfConfig::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Output directory for `report.json`, `report.txt` and `run.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest (`dataset.json`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    /// Evaluate a checkpoint.
    #[arg(long, conflicts_with_all = ["mf", "predictions"])]
    pub checkpoint: Option<PathBuf>,
    /// Evaluate the matched-filter baseline.
    #[arg(long, conflicts_with = "predictions")]
    pub mf: bool,
    /// Evaluate saved score maps from this directory.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Comma-separated class names.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    #[arg(long)]
    pub name: Option<String>,
    /// Score binarization cut.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Predicted pixels that make a tile count as flagged.
    #[arg(long)]
    pub fpr_min_pixels: Option<usize>,
    /// Plume size in pixels above which an event is strong.
    #[arg(long)]
    pub strong_threshold: Option<usize>,
    /// Inference tile size; whole cubes when unset.
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub signature: Option<PathBuf>,
    /// Matched-filter mask threshold in ppm·m.
    #[arg(long)]
    pub mf_threshold: Option<f64>,
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<MorphKernel>,
    #[arg(long)]
    pub iterations: Option<usize>,
}

pub fn resolve(args: &EvalArgs) -> Result<EvalConfig> {
    let mut c: EvalConfig = config::load(args.config.as_deref(), "eval")?;
    if args.data.is_some() {
        c.data = args.data.clone();
    }
    set(&mut c.split, args.split);
    if let Some(p) = &args.checkpoint {
        c.source = Source::Checkpoint;
        c.checkpoint = Some(p.clone());
    }
    if args.mf {
        c.source = Source::Mf;
    }
    if let Some(p) = &args.predictions {
        c.source = Source::Predictions;
        c.predictions = Some(p.clone());
    }
    set(&mut c.task, args.task);
    if args.classes.is_some() {
        c.classes = args.classes.clone();
    }
    if args.name.is_some() {
        c.name = args.name.clone();
    }
    set(&mut c.threshold, args.threshold);
    set(&mut c.fpr_min_pixels, args.fpr_min_pixels);
    set(&mut c.strong_threshold, args.strong_threshold);
    if args.tile.is_some() {
        c.tile = args.tile;
    }
    set(&mut c.overlap, args.overlap);
    set(&mut c.batch_size, args.batch_size);
    if args.signature.is_some() {
        c.mf.signature = args.signature.clone();
    }
    set(&mut c.mf.threshold, args.mf_threshold);
    set(&mut c.mf.kernel, args.kernel);
    set(&mut c.mf.iterations, args.iterations);
    Ok(c)
}

fn valid_mask(cube: &Cube) -> BinaryMask {
    BinaryMask {
        height: cube.height(),
        width: cube.width(),
        data: cube.nodata_mask().iter().map(|&n| !n).collect(),
    }
}

fn model_scores(model: &HyperSegFormer, cube: &Cube, c: &EvalConfig) -> Result<ScoreMap<f32>> {
    match c.tile {
        None => predict_tile(model, cube),
        Some(t) => {
            let grid = tile_grid(cube.height(), cube.width(), t, c.overlap, true)?;
            infer(model, cube, &grid, c.batch_size)
        }
    }
}

fn f32_map(map: ScoreMap<f64>) -> ScoreMap<f32> {
    ScoreMap {
        height: map.height,
        width: map.width,
        channels: map.channels,
        data: map.data.iter().map(|&v| v as f32).collect(),
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    let c = resolve(&args)?;
    let Some(data) = c.data.clone() else {
        return Err(Error::InvalidArgument("--data is required".into()));
    };
    require(&data, "dataset manifest")?;
    let root = data.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest::load(&data)?;
    let entries: Vec<_> = manifest.split(c.split).cloned().collect();
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} has no {} tiles",
            data.display(),
            c.split
        )));
    }

    let mut rec = Recorder::new("eval", &args.out)?;
    rec.input(&data);
    let model = match c.source {
        Source::Checkpoint => {
            let Some(p) = &c.checkpoint else {
                return Err(Error::InvalidArgument(
                    "one of --checkpoint, --mf or --predictions is required".into(),
                ));
            };
            require(p, "checkpoint")?;
            rec.input(p);
            Some(load_model(p)?)
        }
        _ => None,
    };
    let sig = match c.source {
        Source::Mf => Some(load_signature(c.mf.signature.as_deref())?),
        _ => None,
    };
    let pred_dir = match (c.source, &c.predictions) {
        (Source::Predictions, Some(d)) => {
            require(d, "predictions directory")?;
            rec.input(d);
            Some(d.clone())
        }
        (Source::Predictions, None) => {
            return Err(Error::InvalidArgument(
                "--predictions needs a directory".into(),
            ))
        }
        _ => None,
    };

    let mut outcomes = Vec::with_capacity(entries.len());
    for e in &entries {
        let cube: Cube = load_cube(&root.join(&e.cube))?;
        let truth = load_mask(&root.join(&e.mask))?;
        let valid = valid_mask(&cube);
        let outcome = match c.source {
            Source::Checkpoint => {
                let scores = model_scores(model.as_ref().expect("loaded"), &cube, &c)?;
                TileOutcome::from_scores(scores, c.threshold, truth, valid)
            }
            Source::Mf => {
                let out = filter_cube(
                    &root.join(&e.cube),
                    sig.as_ref().expect("loaded"),
                    &c.mf.settings(),
                )?;
                TileOutcome {
                    pred: vec![out.mask],
                    scores: Some(f32_map(out.alpha.to_score_map())),
                    truth,
                    valid,
                }
            }
            Source::Predictions => {
                let dir = pred_dir.as_ref().expect("checked");
                let scores: ScoreMap<f32> =
                    load_score_map(&dir.join(format!("{}score.hdr.json", tile_stem(&e.cube))))?;
                TileOutcome::from_scores(scores, c.threshold, truth, valid)
            }
        };
        outcomes.push(outcome);
    }

    let classes = outcomes[0].truth.classes();
    let task = match c.task {
        TaskArg::Methane => Task::Methane,
        TaskArg::Minerals => Task::Minerals,
        TaskArg::Auto if classes == 1 => Task::Methane,
        TaskArg::Auto => Task::Minerals,
    };
    let class_names = match &c.classes {
        Some(names) => names.clone(),
        None if task == Task::Methane => vec!["methane".into()],
        None => (0..classes).map(|i| format!("class{i}")).collect(),
    };
    let name = c.name.clone().unwrap_or_else(|| match (&model, c.source) {
        (Some(m), _) => {
            let cfg = m.config();
            format!(
                "{}{}",
                cfg.variant,
                if cfg.spectral_layer { "+spectral" } else { "" }
            )
        }
        (None, Source::Mf) => "mf".into(),
        _ => "predictions".into(),
    });
    let settings = EvalSettings {
        threshold: c.threshold,
        fpr_min_pixels: c.fpr_min_pixels,
        strong_threshold: c.strong_threshold,
        auprc_thresholds: c.auprc_thresholds,
    };
    let report = EvalReport::compute(&name, task, &class_names, &outcomes, settings)?;
    report.save(&rec.output("report.json"))?;
    let table = report.to_table();
    let table_path = rec.output("report.txt");
    std::fs::write(&table_path, &table).map_err(|e| Error::Io {
        path: table_path,
        source: e,
    })?;
    rec.finish(&c, None)?;
    print!("{table}");
    Ok(())
}
