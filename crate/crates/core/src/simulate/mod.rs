//! Synthetic methane events: signature resampling, Beer–Lambert injection,
//! plume placement and balanced dataset assembly.

mod dataset;
mod inject;
mod plume;
mod scene;
mod signature;
mod toy;

pub use dataset::{
    build_synthetic_dataset, read_samples, tile_rng, write_samples, DatasetEntry, DatasetManifest,
    DatasetOptions, Split, SyntheticSample,
};
pub use inject::inject_plume;
pub use plume::{
    place_plume, synthetic_library, synthetic_plume, ConcentrationMap, PlumeLibrary, PlumeShape,
};
pub use scene::{confounder_shape, toy_band_centers, toy_scene, ToySceneConfig};
pub use signature::{resample_signature, SpectralSignature};
pub use toy::{toy_dataset, toy_dataset_with, toy_library, ToyDataset, ToyDatasetConfig};
