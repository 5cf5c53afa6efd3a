//! Hyperspectral plume and mineral segmentation toolkit.
//!
//! The crate covers the whole desk-scale pipeline: radiance datacubes and
//! their tiling, Beer–Lambert plume injection, a column-wise matched filter
//! with morphological cleanup, a small hierarchical vision transformer with
//! spectral 1×1 layers and an upscaling decoder tail, evaluation metrics, and
//! a granule timing harness.
//!
//! Numeric code outside the neural network is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below name the common instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod datacube;
pub mod error;
pub mod matchedfilter;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
pub use scalar::Scalar;

/// Single-precision cube, the on-disk and network input type.
pub type Cube = datacube::HyperCube<f32>;
/// Double-precision cube used for matched-filter statistics.
pub type Cube64 = datacube::HyperCube<f64>;
/// Single-precision concentration map.
pub type Concentration = simulate::ConcentrationMap<f32>;
