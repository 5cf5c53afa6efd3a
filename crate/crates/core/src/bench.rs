//! Granule timing harness: tiles a full granule, times tile loading and
//! per-tile processing separately over repeated runs, and reports medians.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::datacube::{extract_tile, load_cube, tile_grid, HyperCube, TileGrid};
use crate::error::{bail, Error, Result};
use crate::matchedfilter::{mf_baseline, MfSettings};
use crate::nn::{predict_tile, HyperSegFormer, ParamStore};
use crate::simulate::{resample_signature, tile_rng, toy_scene, SpectralSignature, ToySceneConfig};

/// EMIT granule extent in pixels.
pub const GRANULE_SHAPE: (usize, usize) = (1280, 1242);
pub const BENCH_TILE: usize = 128;
pub const MIN_REPETITIONS: usize = 3;
/// Granules collected per day by EMIT.
pub const EMIT_GRANULES_PER_DAY: f64 = 300.0;

/// 86 EMIT-like band centers: three visible bands, then 1573-1699 nm and
/// 2004-2478 nm.
pub fn granule_band_centers() -> Vec<f64> {
    let mut c = vec![460.0, 550.0, 640.0];
    c.extend((0..17).map(|k| 1573.0 + 7.4 * k as f64));
    c.extend((0..66).map(|k| 2004.0 + 7.2 * k as f64));
    c
}

/// Something that processes one tile.
pub trait Pipeline: Sync {
    fn name(&self) -> String;
    /// Trainable parameter count, when the pipeline has any.
    fn params(&self) -> Option<usize>;
    fn run_tile(&self, tile: &HyperCube<f32>) -> Result<()>;
}

/// Matched filter, threshold and opening on every tile.
pub struct MfPipeline {
    s: Vec<f64>,
    settings: MfSettings,
}

impl MfPipeline {
    pub fn new(sig: &SpectralSignature, band_centers: &[f64], settings: MfSettings) -> Self {
        Self {
            s: resample_signature(sig, band_centers),
            settings,
        }
    }
}

impl Pipeline for MfPipeline {
    fn name(&self) -> String {
        "mf_baseline".into()
    }

    fn params(&self) -> Option<usize> {
        None
    }

    fn run_tile(&self, tile: &HyperCube<f32>) -> Result<()> {
        mf_baseline(&tile.cast::<f64>(), &self.s, &self.settings).map(drop)
    }
}

/// Network inference with sigmoid on every tile.
pub struct ModelPipeline<'a> {
    pub model: &'a HyperSegFormer,
}

impl Pipeline for ModelPipeline<'_> {
    fn name(&self) -> String {
        let c = self.model.config();
        format!(
            "{}{}",
            c.variant,
            if c.spectral_layer { "+spectral" } else { "" }
        )
    }

    fn params(&self) -> Option<usize> {
        Some(self.model.param_count())
    }

    fn run_tile(&self, tile: &HyperCube<f32>) -> Result<()> {
        predict_tile(self.model, tile).map(drop)
    }
}

/// Sleeps a fixed time per tile; calibrates the harness.
pub struct SleepPipeline(pub Duration);

impl Pipeline for SleepPipeline {
    fn name(&self) -> String {
        "sleep".into()
    }

    fn params(&self) -> Option<usize> {
        None
    }

    fn run_tile(&self, _: &HyperCube<f32>) -> Result<()> {
        std::thread::sleep(self.0);
        Ok(())
    }
}

/// Provides the tiles of one granule; loading is the timed IO phase.
pub trait TileSource: Sync {
    fn granule_shape(&self) -> (usize, usize);
    fn len(&self) -> usize;
    fn load(&self, index: usize) -> Result<HyperCube<f32>>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tiles cut from an in-memory granule.
pub struct GranuleTiles<'a> {
    cube: &'a HyperCube<f32>,
    grid: TileGrid,
}

impl<'a> GranuleTiles<'a> {
    /// Non-overlapping padded grid of `tile`-pixel tiles.
    pub fn new(cube: &'a HyperCube<f32>, tile: usize) -> Result<Self> {
        let grid = tile_grid(cube.height(), cube.width(), tile, 0, true)?;
        Ok(Self { cube, grid })
    }
}

impl TileSource for GranuleTiles<'_> {
    fn granule_shape(&self) -> (usize, usize) {
        (self.cube.height(), self.cube.width())
    }

    fn len(&self) -> usize {
        self.grid.len()
    }

    fn load(&self, index: usize) -> Result<HyperCube<f32>> {
        extract_tile(
            self.cube,
            self.grid.origins[index],
            self.grid.tile_size,
            self.cube.nodata_value(),
        )
    }
}

/// Tiles stored as cube files.
pub struct TileFiles {
    pub paths: Vec<PathBuf>,
    pub granule_shape: (usize, usize),
}

impl TileSource for TileFiles {
    fn granule_shape(&self) -> (usize, usize) {
        self.granule_shape
    }

    fn len(&self) -> usize {
        self.paths.len()
    }

    fn load(&self, index: usize) -> Result<HyperCube<f32>> {
        load_cube(&self.paths[index])
    }
}

/// Procedural granule generated tile by tile, so a full-size workload never
/// sits in memory at once. Edge tiles carry nodata padding.
pub struct SyntheticGranule {
    pub shape: (usize, usize),
    pub tile: usize,
    pub band_centers: Vec<f64>,
    pub seed: u64,
    sig: SpectralSignature,
    grid: TileGrid,
}

impl SyntheticGranule {
    pub fn new(
        shape: (usize, usize),
        tile: usize,
        band_centers: Vec<f64>,
        seed: u64,
        sig: SpectralSignature,
    ) -> Result<Self> {
        let grid = tile_grid(shape.0, shape.1, tile, 0, true)?;
        Ok(Self {
            shape,
            tile,
            band_centers,
            seed,
            sig,
            grid,
        })
    }

    /// Full EMIT-sized granule with 86 bands.
    pub fn emit_like(seed: u64) -> Result<Self> {
        Self::new(
            GRANULE_SHAPE,
            BENCH_TILE,
            granule_band_centers(),
            seed,
            SpectralSignature::synthetic_methane(),
        )
    }
}

impl TileSource for SyntheticGranule {
    fn granule_shape(&self) -> (usize, usize) {
        self.shape
    }

    fn len(&self) -> usize {
        self.grid.len()
    }

    fn load(&self, index: usize) -> Result<HyperCube<f32>> {
        let cfg = ToySceneConfig {
            size: self.tile,
            band_centers: self.band_centers.clone(),
            ..Default::default()
        };
        let scene: HyperCube<f32> = toy_scene(&cfg, &self.sig, &mut tile_rng(self.seed, index))?;
        let (r0, c0) = self.grid.origins[index];
        let (rows, cols) = (
            (self.shape.0 - r0).min(self.tile),
            (self.shape.1 - c0).min(self.tile),
        );
        if rows == self.tile && cols == self.tile {
            return Ok(scene);
        }
        let plane = self.tile * self.tile;
        let nodata: Vec<bool> = (0..plane)
            .map(|p| p / self.tile >= rows || p % self.tile >= cols)
            .collect();
        let mut data = scene.data().to_vec();
        for b in 0..scene.bands() {
            for (p, &nd) in nodata.iter().enumerate() {
                if nd {
                    data[b * plane + p] = 0.0;
                }
            }
        }
        HyperCube::new(
            self.tile,
            self.tile,
            self.band_centers.clone(),
            data,
            nodata,
            0.0,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Dispersion {
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            min: v[0],
            median: median_sorted(&v),
            max: v[v.len() - 1],
        }
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One repetition's phase totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepTiming {
    pub io_seconds: f64,
    pub compute_seconds: f64,
    pub tile_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub pipeline: String,
    pub granule_shape: (usize, usize),
    pub tiles: usize,
    pub threads: usize,
    /// Median over repetitions.
    pub io_seconds: f64,
    /// Median over repetitions of the summed per-tile compute times.
    pub compute_seconds: f64,
    pub seconds_per_tile: f64,
    pub params_millions: Option<f64>,
    pub repetitions: usize,
    /// Per-granule io + compute across repetitions.
    pub dispersion: Dispersion,
    pub runs: Vec<RepTiming>,
}

impl BenchReport {
    pub fn granule_seconds(&self) -> f64 {
        self.io_seconds + self.compute_seconds
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("bench report", e))
    }

    /// Text table: pipeline, parameters, io, compute, total.
    pub fn table(reports: &[BenchReport]) -> String {
        let mut out = format!(
            "{:<24} {:>10} {:>10} {:>12} {:>10} {:>22}\n",
            "Pipeline", "Params (M)", "IO (s)", "Compute (s)", "Total (s)", "min / max total (s)"
        );
        for r in reports {
            let params = r
                .params_millions
                .map_or("-".to_string(), |p| format!("{p:.3}"));
            out.push_str(&format!(
                "{:<24} {:>10} {:>10.3} {:>12.3} {:>10.3} {:>10.3} / {:<9.3}\n",
                r.pipeline,
                params,
                r.io_seconds,
                r.compute_seconds,
                r.granule_seconds(),
                r.dispersion.min,
                r.dispersion.max
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchSettings {
    pub repetitions: usize,
    pub threads: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            repetitions: MIN_REPETITIONS,
            threads: 1,
        }
    }
}

fn run_once(pipeline: &dyn Pipeline, source: &dyn TileSource) -> Result<RepTiming> {
    let (mut io, mut tiles) = (Duration::ZERO, Vec::with_capacity(source.len()));
    for i in 0..source.len() {
        let t0 = Instant::now();
        let tile = source.load(i).map_err(|e| tile_error(i, e))?;
        io += t0.elapsed();
        let t1 = Instant::now();
        pipeline.run_tile(&tile).map_err(|e| tile_error(i, e))?;
        tiles.push(t1.elapsed().as_secs_f64());
    }
    Ok(RepTiming {
        io_seconds: io.as_secs_f64(),
        compute_seconds: tiles.iter().sum(),
        tile_seconds: tiles,
    })
}

fn tile_error(index: usize, e: Error) -> Error {
    let msg = format!("tile {index}: {e}");
    match e.kind() {
        crate::error::ErrorKind::Usage => Error::InvalidArgument(msg),
        crate::error::ErrorKind::Data => Error::Format(msg),
        crate::error::ErrorKind::Numeric => Error::Numeric(msg),
    }
}

/// One untimed warm-up pass, then `repetitions` timed passes on a pool of
/// `threads` workers. Reported phases are medians across passes.
pub fn time_pipeline(
    pipeline: &dyn Pipeline,
    source: &dyn TileSource,
    settings: &BenchSettings,
) -> Result<BenchReport> {
    if settings.repetitions < MIN_REPETITIONS {
        bail!(
            InvalidArgument,
            "at least {MIN_REPETITIONS} repetitions are required, got {}",
            settings.repetitions
        );
    }
    if settings.threads == 0 {
        bail!(InvalidArgument, "thread count must be positive");
    }
    if source.is_empty() {
        bail!(InvalidArgument, "workload has no tiles");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    let runs = pool.install(|| {
        run_once(pipeline, source)?;
        (0..settings.repetitions)
            .map(|_| run_once(pipeline, source))
            .collect::<Result<Vec<_>>>()
    })?;
    let med = |f: fn(&RepTiming) -> f64| {
        let mut v: Vec<f64> = runs.iter().map(f).collect();
        v.sort_by(f64::total_cmp);
        median_sorted(&v)
    };
    let io_seconds = med(|r| r.io_seconds);
    let compute_seconds = med(|r| r.compute_seconds);
    let totals: Vec<f64> = runs
        .iter()
        .map(|r| r.io_seconds + r.compute_seconds)
        .collect();
    Ok(BenchReport {
        pipeline: pipeline.name(),
        granule_shape: source.granule_shape(),
        tiles: source.len(),
        threads: settings.threads,
        io_seconds,
        compute_seconds,
        seconds_per_tile: compute_seconds / source.len() as f64,
        params_millions: pipeline.params().map(|p| p as f64 / 1e6),
        repetitions: settings.repetitions,
        dispersion: Dispersion::of(&totals),
        runs,
    })
}

/// Hours needed for a day's granules at `seconds_per_granule` each.
pub fn daily_hours(seconds_per_granule: f64, granules_per_day: f64) -> f64 {
    granules_per_day * seconds_per_granule / 3600.0
}

/// `granules_per_day · (io + compute) / 3600`.
pub fn daily_projection(report: &BenchReport, granules_per_day: f64) -> f64 {
    daily_hours(report.granule_seconds(), granules_per_day)
}

/// Trainable parameters in millions.
pub fn param_count(store: &ParamStore) -> f64 {
    store.trainable_count() as f64 / 1e6
}

#[cfg(test)]
mod tests;
