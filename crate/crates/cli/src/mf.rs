use std::path::{Path, PathBuf};

use clap::Args;
use hsk_core::datacube::{load_cube, save_mask, LabelMask};
use hsk_core::matchedfilter::{mf_baseline, MfOutput, MfSettings, MorphKernel};
use hsk_core::simulate::{resample_signature, DatasetManifest, SpectralSignature, Split};
use hsk_core::{Cube64, Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{self, require, set};
use crate::manifest::Recorder;
use crate::simulate::load_signature;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfConfig {
    /// Single cube to filter.
    pub cube: Option<PathBuf>,
    /// Dataset manifest whose `split` tiles are filtered.
    pub data: Option<PathBuf>,
    pub split: Split,
    pub signature: Option<PathBuf>,
    pub iterations: usize,
    /// Mask threshold in ppm·m.
    pub threshold: f64,
    pub kernel: MorphKernel,
    /// Covariance shrinkage toward the diagonal.
    pub lambda: f64,
}

impl Default for MfConfig {
    fn default() -> Self {
        let d = MfSettings::default();
        Self {
            cube: None,
            data: None,
            split: Split::Test,
            signature: None,
            iterations: d.iterations,
            threshold: d.threshold,
            kernel: d.kernel,
            lambda: d.lambda,
        }
    }
}

impl MfConfig {
    pub fn settings(&self) -> MfSettings {
        MfSettings {
            iterations: self.iterations,
            threshold: self.threshold,
            kernel: self.kernel,
            lambda: self.lambda,
        }
    }
}

#[derive(Debug, Args)]
pub struct MfArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Cube header (`.hdr.json`).
    #[arg(long, conflicts_with = "data")]
    pub cube: Option<PathBuf>,
    /// Dataset manifest (`dataset.json`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_split)]
    pub split: Option<Split>,
    #[arg(long)]
    pub signature: Option<PathBuf>,
    /// Background re-estimation rounds; 1 is the plain filter.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Mask threshold in ppm·m.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Opening kernel: cross3 or ones3.
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<MorphKernel>,
    #[arg(long)]
    pub lambda: Option<f64>,
}

pub(crate) fn parse_kernel(s: &str) -> std::result::Result<MorphKernel, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub(crate) fn parse_split(s: &str) -> std::result::Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (expected train, val or test)")),
    }
}

pub fn resolve(args: &MfArgs) -> Result<MfConfig> {
    let mut c: MfConfig = config::load(args.config.as_deref(), "mf")?;
    if args.cube.is_some() {
        c.cube = args.cube.clone();
        c.data = None;
    }
    if args.data.is_some() {
        c.data = args.data.clone();
        c.cube = None;
    }
    if args.signature.is_some() {
        c.signature = args.signature.clone();
    }
    set(&mut c.split, args.split);
    set(&mut c.iterations, args.iterations);
    set(&mut c.threshold, args.threshold);
    set(&mut c.kernel, args.kernel);
    set(&mut c.lambda, args.lambda);
    if c.iterations == 0 {
        return Err(Error::InvalidArgument(
            "--iterations must be at least 1".into(),
        ));
    }
    Ok(c)
}

/// Filters one cube in double precision.
pub fn filter_cube(
    path: &Path,
    sig: &SpectralSignature,
    settings: &MfSettings,
) -> Result<MfOutput<f64>> {
    let cube: Cube64 = load_cube(path)?;
    let s: Vec<f64> = resample_signature(sig, cube.band_centers());
    mf_baseline(&cube, &s, settings)
}

fn write(rec: &mut Recorder, stem: &str, out: &MfOutput<f64>) -> Result<()> {
    out.alpha
        .save(&rec.raster(format!("{stem}alpha.hdr.json")))?;
    save_mask(
        &LabelMask::binary(&out.mask),
        &rec.raster(format!("{stem}mask.hdr.json")),
    )
}

pub fn run(args: MfArgs) -> Result<()> {
    let c = resolve(&args)?;
    let sig = load_signature(c.signature.as_deref())?;
    let settings = c.settings();
    let mut rec = Recorder::new("mf", &args.out)?;
    if let Some(p) = &c.signature {
        rec.input(p);
    }
    let count = match (&c.cube, &c.data) {
        (Some(cube), _) => {
            require(cube, "cube")?;
            rec.input(cube);
            write(&mut rec, "", &filter_cube(cube, &sig, &settings)?)?;
            1
        }
        (None, Some(data)) => {
            require(data, "dataset manifest")?;
            rec.input(data);
            let root = data.parent().map(Path::to_path_buf).unwrap_or_default();
            let manifest = DatasetManifest::load(data)?;
            let entries: Vec<_> = manifest.split(c.split).collect();
            for e in &entries {
                let out = filter_cube(&root.join(&e.cube), &sig, &settings)?;
                write(&mut rec, &tile_stem(&e.cube), &out)?;
            }
            entries.len()
        }
        (None, None) => {
            return Err(Error::InvalidArgument(
                "one of --cube or --data is required".into(),
            ))
        }
    };
    rec.finish(&c, None)?;
    println!(
        "filtered {count} cube(s): {} iterations, threshold {} ppm·m, {} opening",
        c.iterations, c.threshold, c.kernel
    );
    Ok(())
}

/// `train_0003_cube.hdr.json` -> `train_0003_`.
pub(crate) fn tile_stem(cube: &str) -> String {
    let name = Path::new(cube)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let base = name.strip_suffix(".hdr.json").unwrap_or(&name);
    let base = base.strip_suffix("cube").unwrap_or(base);
    base.to_string()
}
