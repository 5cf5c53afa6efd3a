//! Seeded end-to-end toy datasets: procedural scenes, a procedural plume
//! library and half-positive train/val/test splits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::{build_synthetic_dataset, tile_rng, DatasetOptions, SyntheticSample};
use super::plume::{synthetic_library, PlumeLibrary, PlumeShape};
use super::scene::{toy_scene, ToySceneConfig};
use super::signature::SpectralSignature;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDatasetConfig {
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub scene: ToySceneConfig,
    pub plume: PlumeShape,
    pub library_size: usize,
    pub event_fraction: f64,
}

impl Default for ToyDatasetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train: 200,
            val: 20,
            test: 50,
            scene: ToySceneConfig::default(),
            plume: PlumeShape::default(),
            library_size: 64,
            event_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset<T> {
    pub train: Vec<SyntheticSample<T>>,
    pub val: Vec<SyntheticSample<T>>,
    pub test: Vec<SyntheticSample<T>>,
}

/// Builds all three splits with a procedural plume library.
pub fn toy_dataset<T: Scalar>(
    cfg: &ToyDatasetConfig,
    sig: &SpectralSignature,
) -> Result<ToyDataset<T>> {
    toy_dataset_with(cfg, sig, &toy_library(cfg))
}

/// The procedural library `toy_dataset` uses.
pub fn toy_library<T: Scalar>(cfg: &ToyDatasetConfig) -> PlumeLibrary<T> {
    synthetic_library(
        cfg.library_size,
        &cfg.plume,
        &mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
    )
}

/// Builds all three splits from `library`. Every split draws its scenes and
/// plume placements from its own generator streams.
pub fn toy_dataset_with<T: Scalar>(
    cfg: &ToyDatasetConfig,
    sig: &SpectralSignature,
    library: &PlumeLibrary<T>,
) -> Result<ToyDataset<T>> {
    let split = |k: u64, n: usize| -> Result<Vec<SyntheticSample<T>>> {
        if n == 0 {
            return Ok(Vec::new());
        }
        let seed = cfg.seed.wrapping_mul(4).wrapping_add(k);
        let scenes = (0..n)
            .into_par_iter()
            .map(|i| toy_scene(&cfg.scene, sig, &mut tile_rng(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        let opts = DatasetOptions {
            seed: seed.wrapping_add(1 << 32),
            event_fraction: cfg.event_fraction,
            scale: 1.0,
        };
        build_synthetic_dataset(&scenes, library, sig, &opts)
    };
    Ok(ToyDataset {
        train: split(1, cfg.train)?,
        val: split(2, cfg.val)?,
        test: split(3, cfg.test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_have_requested_sizes_and_balance() {
        let cfg = ToyDatasetConfig {
            train: 10,
            val: 4,
            test: 6,
            scene: ToySceneConfig {
                size: 16,
                ..Default::default()
            },
            plume: PlumeShape {
                size: (4, 10),
                ..Default::default()
            },
            ..Default::default()
        };
        let sig = SpectralSignature::synthetic_methane();
        let d: ToyDataset<f32> = toy_dataset(&cfg, &sig).unwrap();
        assert_eq!((d.train.len(), d.val.len(), d.test.len()), (10, 4, 6));
        assert_eq!(d.train.iter().filter(|s| s.label.has_positive()).count(), 5);
        assert_eq!(d, toy_dataset(&cfg, &sig).unwrap());
        assert_ne!(d.train[0].cube, d.test[0].cube);
    }
}
