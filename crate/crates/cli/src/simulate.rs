use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hsk_core::bench::granule_band_centers;
use hsk_core::simulate::{
    toy_band_centers, toy_dataset_with, toy_library, write_samples, DatasetManifest, PlumeLibrary,
    PlumeShape, SpectralSignature, Split, ToyDatasetConfig, ToySceneConfig,
};
use hsk_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, require, set};
use crate::manifest::Recorder;
use crate::DEFAULT_SIGNATURE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BandSet {
    /// Eight SWIR bands around 2.3 µm.
    Toy,
    /// 86 EMIT-like bands: RGB plus the 1.6 and 2.3 µm windows.
    Emit,
}

impl BandSet {
    pub fn centers(self) -> Vec<f64> {
        match self {
            BandSet::Toy => toy_band_centers(),
            BandSet::Emit => granule_band_centers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub size: usize,
    pub bands: BandSet,
    pub event_fraction: f64,
    pub noise: f64,
    pub stripes: (usize, usize),
    pub stripe_width: (f64, f64),
    pub confounder_strength: (f64, f64),
    pub confounder_overlap: f64,
    pub plume_size: (usize, usize),
    pub plume_peak: (f64, f64),
    pub plume_floor: f64,
    pub library_size: usize,
    /// Two-column absorption text file; the bundled methane curve if unset.
    pub signature: Option<PathBuf>,
    /// Directory of concentration rasters; procedural plumes if unset.
    pub library: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        let d = ToyDatasetConfig::default();
        Self {
            seed: d.seed,
            train: d.train,
            val: d.val,
            test: d.test,
            size: d.scene.size,
            bands: BandSet::Toy,
            event_fraction: d.event_fraction,
            noise: d.scene.noise,
            stripes: d.scene.stripes,
            stripe_width: d.scene.stripe_width,
            confounder_strength: d.scene.confounder_strength,
            confounder_overlap: d.scene.confounder_overlap,
            plume_size: d.plume.size,
            plume_peak: d.plume.peak,
            plume_floor: d.plume.floor_fraction,
            library_size: d.library_size,
            signature: None,
            library: None,
        }
    }
}

impl SimulateConfig {
    pub fn dataset_config(&self) -> ToyDatasetConfig {
        ToyDatasetConfig {
            seed: self.seed,
            train: self.train,
            val: self.val,
            test: self.test,
            scene: ToySceneConfig {
                size: self.size,
                band_centers: self.bands.centers(),
                noise: self.noise,
                stripes: self.stripes,
                stripe_width: self.stripe_width,
                confounder_strength: self.confounder_strength,
                confounder_overlap: self.confounder_overlap,
            },
            plume: PlumeShape {
                size: self.plume_size,
                peak: self.plume_peak,
                floor_fraction: self.plume_floor,
            },
            library_size: self.library_size,
            event_fraction: self.event_fraction,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory for rasters, `dataset.json` and `run.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON settings or a previous `run.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training tiles.
    #[arg(long)]
    pub train: Option<usize>,
    /// Validation tiles.
    #[arg(long)]
    pub val: Option<usize>,
    /// Test tiles.
    #[arg(long)]
    pub test: Option<usize>,
    /// Tile side in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, value_enum)]
    pub bands: Option<BandSet>,
    /// Share of tiles per split that receive a plume.
    #[arg(long)]
    pub event_fraction: Option<f64>,
    /// Relative sensor noise.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Methane-shaped share of confounder absorption.
    #[arg(long)]
    pub confounder_overlap: Option<f64>,
    #[arg(long)]
    pub library_size: Option<usize>,
    #[arg(long)]
    pub signature: Option<PathBuf>,
    #[arg(long)]
    pub library: Option<PathBuf>,
}

pub const DATASET_FILE: &str = "dataset.json";
pub const SIGNATURE_FILE: &str = "signature.txt";

pub fn resolve(args: &SimulateArgs) -> Result<SimulateConfig> {
    let mut c: SimulateConfig = config::load(args.config.as_deref(), "simulate")?;
    set(&mut c.seed, args.seed);
    set(&mut c.train, args.train);
    set(&mut c.val, args.val);
    set(&mut c.test, args.test);
    set(&mut c.size, args.size);
    set(&mut c.bands, args.bands);
    set(&mut c.event_fraction, args.event_fraction);
    set(&mut c.noise, args.noise);
    set(&mut c.confounder_overlap, args.confounder_overlap);
    set(&mut c.library_size, args.library_size);
    if args.signature.is_some() {
        c.signature = args.signature.clone();
    }
    if args.library.is_some() {
        c.library = args.library.clone();
    }
    Ok(c)
}

/// The signature at `path`, or the bundled one.
pub fn load_signature(path: Option<&Path>) -> Result<SpectralSignature> {
    match path {
        Some(p) => {
            require(p, "signature file")?;
            SpectralSignature::load(p)
        }
        None => SpectralSignature::parse(DEFAULT_SIGNATURE),
    }
}

pub fn run(args: SimulateArgs) -> Result<()> {
    let c = resolve(&args)?;
    if c.size == 0 {
        return Err(Error::InvalidArgument(
            "tile size must be at least 1".into(),
        ));
    }
    let sig = load_signature(c.signature.as_deref())?;
    let ds_cfg = c.dataset_config();
    let library: PlumeLibrary<f32> = match &c.library {
        Some(dir) => {
            require(dir, "plume library")?;
            PlumeLibrary::load_dir(dir)?
        }
        None => toy_library(&ds_cfg),
    };
    let data = toy_dataset_with::<f32>(&ds_cfg, &sig, &library)?;

    let mut rec = Recorder::new("simulate", &args.out)?;
    if let Some(p) = &c.signature {
        rec.input(p);
    }
    if let Some(p) = &c.library {
        rec.input(p);
    }
    let mut entries = Vec::new();
    for (split, samples) in [
        (Split::Train, &data.train),
        (Split::Val, &data.val),
        (Split::Test, &data.test),
    ] {
        let rows = write_samples(rec.dir(), &split.to_string(), samples, split)?;
        for e in &rows {
            rec.raster(e.cube.clone());
            rec.raster(e.mask.clone());
            rec.raster(e.alpha.clone());
        }
        entries.extend(rows);
    }
    let positives = entries.iter().filter(|e| e.positive).count();
    DatasetManifest { entries }.save(&rec.output(DATASET_FILE))?;
    sig.save(&rec.output(SIGNATURE_FILE))?;
    rec.finish(&c, Some(c.seed))?;
    println!(
        "wrote {} train / {} val / {} test tiles ({positives} with plumes) to {}",
        c.train,
        c.val,
        c.test,
        args.out.display()
    );
    Ok(())
}
