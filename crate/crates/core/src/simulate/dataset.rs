use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inject::inject_plume;
use super::plume::{place_plume, ConcentrationMap, PlumeLibrary};
use super::signature::{resample_signature, SpectralSignature};
use crate::datacube::{load_cube, load_mask, save_cube, save_mask, HyperCube, LabelMask};
use crate::error::{bail, Error, Result};
use crate::scalar::Scalar;

/// One labeled tile: radiance with any injected plume, its binary label and
/// the ground-truth concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample<T> {
    pub cube: HyperCube<T>,
    pub label: LabelMask,
    pub alpha: ConcentrationMap<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetOptions {
    pub seed: u64,
    /// Share of tiles that receive a plume.
    pub event_fraction: f64,
    /// Multiplier applied to library concentrations before placement.
    pub scale: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            event_fraction: 0.5,
            scale: 1.0,
        }
    }
}

/// Generator for tile `index`: one root seed, one independent stream per
/// tile, so results do not depend on scheduling.
pub fn tile_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

fn crop_to_fit<T: Scalar>(
    patch: &ConcentrationMap<T>,
    h: usize,
    w: usize,
) -> Result<ConcentrationMap<T>> {
    if patch.height() <= h && patch.width() <= w {
        return Ok(patch.clone());
    }
    let (ph, pw) = (patch.height().min(h), patch.width().min(w));
    let (r0, c0) = ((patch.height() - ph) / 2, (patch.width() - pw) / 2);
    let alpha = (0..ph)
        .flat_map(|r| (0..pw).map(move |c| (r, c)))
        .map(|(r, c)| patch.get(r0 + r, c0 + c))
        .collect();
    ConcentrationMap::new(ph, pw, alpha)
}

/// Injects one library plume into `round(event_fraction · N)` randomly
/// chosen tiles and leaves the rest event-free.
pub fn build_synthetic_dataset<T: Scalar>(
    clean_tiles: &[HyperCube<T>],
    library: &PlumeLibrary<T>,
    sig: &SpectralSignature,
    options: &DatasetOptions,
) -> Result<Vec<SyntheticSample<T>>> {
    if clean_tiles.is_empty() {
        bail!(InvalidArgument, "no clean tiles to simulate into");
    }
    if library.is_empty() {
        bail!(InvalidArgument, "plume library is empty");
    }
    if !(0.0..=1.0).contains(&options.event_fraction) {
        bail!(
            InvalidArgument,
            "event fraction {} is outside [0, 1]",
            options.event_fraction
        );
    }
    let n = clean_tiles.len();
    let positives = (options.event_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    let mut is_positive = vec![false; n];
    for &i in &order[..positives] {
        is_positive[i] = true;
    }
    let scale = T::lit(options.scale);

    clean_tiles
        .par_iter()
        .enumerate()
        .map(|(i, clean)| {
            let (h, w) = (clean.height(), clean.width());
            let mut alpha = ConcentrationMap::zeros(h, w);
            if is_positive[i] {
                let mut rng = tile_rng(options.seed, i);
                let patch = crop_to_fit(library.get(library.sample_index(&mut rng)), h, w)?;
                let r0 = rand::Rng::random_range(&mut rng, 0..=h - patch.height());
                let c0 = rand::Rng::random_range(&mut rng, 0..=w - patch.width());
                alpha = place_plume(&alpha, &patch, (r0, c0), scale)?;
            }
            let s: Vec<T> = resample_signature(sig, clean.band_centers());
            let cube = inject_plume(clean, &alpha, &s)?;
            let label = LabelMask::binary(&alpha.support());
            Ok(SyntheticSample { cube, label, alpha })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One manifest row; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub cube: String,
    pub mask: String,
    pub alpha: String,
    pub split: Split,
    /// Whether the tile holds at least one labeled pixel.
    #[serde(default)]
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatasetManifest {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("dataset manifest", e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }
}

/// Writes samples as `<prefix>_<index>_{cube,mask,alpha}` rasters under
/// `dir` and returns their manifest rows.
pub fn write_samples<T: Scalar>(
    dir: &Path,
    prefix: &str,
    samples: &[SyntheticSample<T>],
    split: Split,
) -> Result<Vec<DatasetEntry>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let stem = format!("{prefix}_{i:04}");
            let entry = DatasetEntry {
                cube: format!("{stem}_cube.hdr.json"),
                mask: format!("{stem}_mask.hdr.json"),
                alpha: format!("{stem}_alpha.hdr.json"),
                split,
                positive: s.label.has_positive(),
            };
            save_cube(&s.cube, &dir.join(&entry.cube))?;
            save_mask(&s.label, &dir.join(&entry.mask))?;
            s.alpha.save(&dir.join(&entry.alpha))?;
            Ok(entry)
        })
        .collect()
}

/// Reads back every sample of `split` from a manifest.
pub fn read_samples<T: Scalar>(
    manifest_path: &Path,
    split: Split,
) -> Result<Vec<SyntheticSample<T>>> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let root: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    manifest
        .split(split)
        .map(|e| {
            Ok(SyntheticSample {
                cube: load_cube(&root.join(&e.cube))?,
                label: load_mask(&root.join(&e.mask))?,
                alpha: ConcentrationMap::load(&root.join(&e.alpha))?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::plume::{synthetic_library, PlumeShape};
    use crate::simulate::scene::{toy_scene, ToySceneConfig};

    fn fixture(n: usize) -> (Vec<HyperCube<f32>>, PlumeLibrary<f32>, SpectralSignature) {
        let sig = SpectralSignature::synthetic_methane();
        let cfg = ToySceneConfig {
            size: 32,
            ..Default::default()
        };
        let tiles = (0..n)
            .map(|i| toy_scene(&cfg, &sig, &mut tile_rng(99, i)).unwrap())
            .collect();
        let lib = synthetic_library(
            12,
            &PlumeShape::default(),
            &mut ChaCha8Rng::seed_from_u64(5),
        );
        (tiles, lib, sig)
    }

    #[test]
    fn half_of_ten_tiles_are_events() {
        let (tiles, lib, sig) = fixture(10);
        let out = build_synthetic_dataset(
            &tiles,
            &lib,
            &sig,
            &DatasetOptions {
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.iter().filter(|s| s.label.has_positive()).count(), 5);
        for s in &out {
            assert_eq!(s.label.class_mask(0), s.alpha.support());
        }
    }

    #[test]
    fn zero_fraction_is_event_free() {
        let (tiles, lib, sig) = fixture(6);
        let opts = DatasetOptions {
            seed: 2,
            event_fraction: 0.0,
            scale: 1.0,
        };
        let out = build_synthetic_dataset(&tiles, &lib, &sig, &opts).unwrap();
        assert!(out.iter().all(|s| !s.label.has_positive()));
        assert!(out.iter().zip(&tiles).all(|(s, t)| &s.cube == t));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let (tiles, lib, sig) = fixture(8);
        let opts = DatasetOptions {
            seed: 7,
            event_fraction: 0.5,
            scale: 1.0,
        };
        let a = build_synthetic_dataset(&tiles, &lib, &sig, &opts).unwrap();
        let b = build_synthetic_dataset(&tiles, &lib, &sig, &opts).unwrap();
        assert_eq!(a, b);
        let c = build_synthetic_dataset(&tiles, &lib, &sig, &DatasetOptions { seed: 8, ..opts })
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let (tiles, lib, sig) = fixture(2);
        let opts = DatasetOptions::default();
        assert!(build_synthetic_dataset::<f32>(&[], &lib, &sig, &opts).is_err());
        assert!(
            build_synthetic_dataset(&tiles, &PlumeLibrary::new(vec![]).unwrap(), &sig, &opts)
                .is_err()
        );
        assert!(build_synthetic_dataset(
            &tiles,
            &lib,
            &sig,
            &DatasetOptions {
                event_fraction: 1.5,
                ..opts
            }
        )
        .is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let (tiles, lib, sig) = fixture(3);
        let samples =
            build_synthetic_dataset(&tiles, &lib, &sig, &DatasetOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let entries = write_samples(dir.path(), "t", &samples, Split::Test).unwrap();
        let manifest = DatasetManifest { entries };
        let mpath = dir.path().join("dataset.json");
        manifest.save(&mpath).unwrap();
        let back: Vec<SyntheticSample<f32>> = read_samples(&mpath, Split::Test).unwrap();
        assert_eq!(back, samples);
        assert!(read_samples::<f32>(&mpath, Split::Train)
            .unwrap()
            .is_empty());
    }
}
