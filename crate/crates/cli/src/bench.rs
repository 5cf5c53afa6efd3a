use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, ValueEnum};
use hsk_core::bench::{
    daily_hours, time_pipeline, BenchReport, BenchSettings, GranuleTiles, MfPipeline,
    ModelPipeline, Pipeline, SleepPipeline, SyntheticGranule, TileSource, BENCH_TILE,
    EMIT_GRANULES_PER_DAY, GRANULE_SHAPE, MIN_REPETITIONS,
};
use hsk_core::datacube::load_cube;
use hsk_core::matchedfilter::MfSettings;
use hsk_core::nn::{load_model, HyperSegFormer, Variant};
use hsk_core::{Cube, Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, require, set};
use crate::manifest::Recorder;
use crate::simulate::{load_signature, BandSet};
use crate::train::{Dims, TrainCliConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Mf,
    Base,
    Convup,
    Convupstride,
    /// Fixed sleep per tile, for harness calibration.
    Sleep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub pipelines: Vec<PipelineKind>,
    /// Extra model pipelines loaded from checkpoints.
    pub checkpoints: Vec<PathBuf>,
    /// Time this cube instead of a synthetic granule.
    pub cube: Option<PathBuf>,
    pub granule: (usize, usize),
    pub tile: usize,
    pub bands: BandSet,
    pub dims: Dims,
    pub spectral: bool,
    pub repetitions: usize,
    pub granules_per_day: f64,
    /// Project this per-granule time instead of timing anything.
    pub seconds_per_granule: Option<f64>,
    pub sleep_ms: u64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pipelines: vec![
                PipelineKind::Mf,
                PipelineKind::Base,
                PipelineKind::Convup,
                PipelineKind::Convupstride,
            ],
            checkpoints: Vec::new(),
            cube: None,
            granule: GRANULE_SHAPE,
            tile: BENCH_TILE,
            bands: BandSet::Emit,
            dims: Dims::Toy,
            spectral: false,
            repetitions: MIN_REPETITIONS,
            granules_per_day: EMIT_GRANULES_PER_DAY,
            seconds_per_granule: None,
            sleep_ms: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory for `bench.json` and `run.json`; print only when unset.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated pipelines.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub pipelines: Option<Vec<PipelineKind>>,
    /// Time a trained checkpoint as well (repeatable).
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Cube to tile and time instead of a synthetic granule.
    #[arg(long)]
    pub cube: Option<PathBuf>,
    /// Synthetic granule extent, `ROWSxCOLS`.
    #[arg(long, value_parser = parse_shape)]
    pub granule: Option<(usize, usize)>,
    #[arg(long)]
    pub tile: Option<usize>,
    #[arg(long, value_enum)]
    pub bands: Option<BandSet>,
    #[arg(long, value_enum)]
    pub dims: Option<Dims>,
    #[arg(long)]
    pub spectral: Option<bool>,
    /// Timed repetitions after one warm-up pass (at least 3).
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub granules_per_day: Option<f64>,
    /// Project this per-granule time without timing anything.
    #[arg(long)]
    pub seconds_per_granule: Option<f64>,
    /// Per-tile delay of the `sleep` pipeline.
    #[arg(long)]
    pub sleep_ms: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(r)?, p(c)?))
}

pub fn resolve(args: &BenchArgs) -> Result<BenchConfig> {
    let mut c: BenchConfig = config::load(args.config.as_deref(), "bench")?;
    if let Some(p) = &args.pipelines {
        c.pipelines = p.clone();
    }
    if !args.checkpoints.is_empty() {
        c.checkpoints = args.checkpoints.clone();
    }
    if args.cube.is_some() {
        c.cube = args.cube.clone();
    }
    set(&mut c.granule, args.granule);
    set(&mut c.tile, args.tile);
    set(&mut c.bands, args.bands);
    set(&mut c.dims, args.dims);
    set(&mut c.spectral, args.spectral);
    set(&mut c.repetitions, args.reps);
    set(&mut c.granules_per_day, args.granules_per_day);
    if args.seconds_per_granule.is_some() {
        c.seconds_per_granule = args.seconds_per_granule;
    }
    set(&mut c.sleep_ms, args.sleep_ms);
    set(&mut c.seed, args.seed);
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub pipeline: String,
    pub seconds_per_granule: f64,
    pub hours_per_day: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutput {
    pub granules_per_day: f64,
    pub reports: Vec<BenchReport>,
    pub projections: Vec<Projection>,
}

fn model(kind: PipelineKind, bands: usize, c: &BenchConfig) -> Result<HyperSegFormer> {
    let variant = match kind {
        PipelineKind::Base => Variant::Base,
        PipelineKind::Convup => Variant::ConvUp,
        _ => Variant::ConvUpStride,
    };
    let cfg = TrainCliConfig {
        variant,
        spectral: c.spectral,
        dims: c.dims,
        prior: None,
        ..Default::default()
    };
    HyperSegFormer::new(cfg.model_config(bands, 1), c.seed)
}

fn timed(c: &BenchConfig, threads: usize) -> Result<Vec<BenchReport>> {
    if c.repetitions < MIN_REPETITIONS {
        return Err(Error::InvalidArgument(format!(
            "--reps {} is below the minimum of {MIN_REPETITIONS} for a reported run",
            c.repetitions
        )));
    }
    let sig = load_signature(None)?;
    let cube: Option<Cube> = match &c.cube {
        Some(p) => {
            require(p, "cube")?;
            Some(load_cube(p)?)
        }
        None => None,
    };
    let synthetic;
    let granule;
    let (source, centers): (&dyn TileSource, Vec<f64>) = match &cube {
        Some(cube) => {
            granule = GranuleTiles::new(cube, c.tile)?;
            (&granule, cube.band_centers().to_vec())
        }
        None => {
            synthetic =
                SyntheticGranule::new(c.granule, c.tile, c.bands.centers(), c.seed, sig.clone())?;
            (&synthetic, c.bands.centers())
        }
    };
    let settings = BenchSettings {
        repetitions: c.repetitions,
        threads,
    };
    let mut models = Vec::new();
    for kind in &c.pipelines {
        if matches!(
            kind,
            PipelineKind::Base | PipelineKind::Convup | PipelineKind::Convupstride
        ) {
            models.push(model(*kind, centers.len(), c)?);
        }
    }
    for p in &c.checkpoints {
        require(p, "checkpoint")?;
        models.push(load_model(p)?);
    }
    let mf = MfPipeline::new(&sig, &centers, MfSettings::default());
    let sleep = SleepPipeline(Duration::from_millis(c.sleep_ms));
    let mut order: Vec<&dyn Pipeline> = Vec::new();
    let model_pipes: Vec<ModelPipeline> =
        models.iter().map(|m| ModelPipeline { model: m }).collect();
    let mut next_model = model_pipes.iter();
    for kind in &c.pipelines {
        match kind {
            PipelineKind::Mf => order.push(&mf),
            PipelineKind::Sleep => order.push(&sleep),
            _ => order.push(next_model.next().expect("one model per kind")),
        }
    }
    order.extend(next_model.map(|m| m as &dyn Pipeline));
    order
        .iter()
        .map(|p| time_pipeline(*p, source, &settings))
        .collect()
}

pub fn run(args: BenchArgs, threads: usize) -> Result<()> {
    let c = resolve(&args)?;
    let reports = match c.seconds_per_granule {
        Some(_) => Vec::new(),
        None => timed(&c, threads)?,
    };
    let mut projections: Vec<Projection> = reports
        .iter()
        .map(|r| Projection {
            pipeline: r.pipeline.clone(),
            seconds_per_granule: r.granule_seconds(),
            hours_per_day: daily_hours(r.granule_seconds(), c.granules_per_day),
        })
        .collect();
    if let Some(s) = c.seconds_per_granule {
        projections.push(Projection {
            pipeline: "given".into(),
            seconds_per_granule: s,
            hours_per_day: daily_hours(s, c.granules_per_day),
        });
    }
    if !reports.is_empty() {
        print!("{}", BenchReport::table(&reports));
    }
    for p in &projections {
        println!(
            "{}: {:.3} s/granule x {} granules/day = {:.2} h/day",
            p.pipeline, p.seconds_per_granule, c.granules_per_day, p.hours_per_day
        );
    }
    if let Some(out) = &args.out {
        let mut rec = Recorder::new("bench", out)?;
        for p in c.cube.iter().chain(&c.checkpoints) {
            rec.input(p);
        }
        let body = BenchOutput {
            granules_per_day: c.granules_per_day,
            reports,
            projections,
        };
        let text = serde_json::to_string_pretty(&body).map_err(|e| Error::Format(e.to_string()))?;
        let path = rec.output("bench.json");
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })?;
        rec.finish(&c, Some(c.seed))?;
    }
    Ok(())
}
