//! Classical baseline: column-wise matched filter with background
//! re-estimation, a concentration threshold and morphological opening.

mod filter;
mod linalg;
mod morphology;

pub use filter::{
    column_stats, iterate_mf, matched_filter, sample_moments, ColumnStats, DEFAULT_LAMBDA,
};
pub use morphology::{dilate, erode, opening, MorphKernel};

use crate::datacube::{BinaryMask, HyperCube};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::simulate::ConcentrationMap;

/// Threshold applied to the concentration map, ppm·m.
pub const DEFAULT_THRESHOLD: f64 = 500.0;
/// Filter passes (first pass plus background re-estimations).
pub const DEFAULT_ITERATIONS: usize = 5;

/// `alpha >= tau`.
pub fn threshold_map<T: Scalar>(alpha: &ConcentrationMap<T>, tau: T) -> BinaryMask {
    BinaryMask {
        height: alpha.height(),
        width: alpha.width(),
        data: alpha.alpha().iter().map(|&a| a >= tau).collect(),
    }
}

/// Settings of the full classical pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfSettings {
    pub iterations: usize,
    pub threshold: f64,
    pub kernel: MorphKernel,
    pub lambda: f64,
}

impl Default for MfSettings {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            threshold: DEFAULT_THRESHOLD,
            kernel: MorphKernel::Cross3,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

/// Concentration map and its cleaned detection mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MfOutput<T> {
    pub alpha: ConcentrationMap<T>,
    pub mask: BinaryMask,
}

/// Matched filter, threshold, opening.
pub fn mf_baseline<T: Scalar>(
    cube: &HyperCube<T>,
    s: &[T],
    settings: &MfSettings,
) -> Result<MfOutput<T>> {
    let alpha = iterate_mf(cube, s, settings.iterations, T::lit(settings.lambda))?;
    let mask = opening(
        &threshold_map(&alpha, T::lit(settings.threshold)),
        settings.kernel,
    );
    Ok(MfOutput { alpha, mask })
}

#[cfg(test)]
mod tests;
