use rayon::prelude::*;

use super::linalg::{cholesky, cholesky_solve};
use crate::datacube::HyperCube;
use crate::error::{bail, Result};
use crate::scalar::Scalar;
use crate::simulate::ConcentrationMap;

/// Default covariance regularization: `Σ + λ·diag(Σ)`.
pub const DEFAULT_LAMBDA: f64 = 1e-4;

/// Background statistics of one detector column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats<T> {
    /// Mean spectrum μ.
    pub mean: Vec<T>,
    /// Regularized covariance, row-major `bands × bands`.
    pub cov: Vec<T>,
    /// Target signature t = μ ⊙ s: the radiance removed by one ppm·m.
    pub target: Vec<T>,
    /// Pixels that contributed.
    pub samples: usize,
    /// True when the column had too few pixels and whole-image statistics
    /// were substituted.
    pub global_fallback: bool,
    factor: Vec<T>,
}

impl<T: Scalar> ColumnStats<T> {
    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    /// Σ⁻¹t, the filter direction.
    pub fn filter_weights(&self) -> Vec<T> {
        cholesky_solve(&self.factor, self.bands(), &self.target)
    }
}

/// Unregularized mean and sample covariance of `pixels` (each a spectrum of
/// `bands` values laid out contiguously).
pub fn sample_moments<T: Scalar>(pixels: &[T], bands: usize) -> (Vec<T>, Vec<T>) {
    let n = pixels.len() / bands;
    let mut mean = vec![T::zero(); bands];
    for px in pixels.chunks_exact(bands) {
        for (m, &v) in mean.iter_mut().zip(px) {
            *m += v;
        }
    }
    let nf = T::count(n.max(1));
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut cov = vec![T::zero(); bands * bands];
    let mut centered = vec![T::zero(); bands];
    for px in pixels.chunks_exact(bands) {
        for b in 0..bands {
            centered[b] = px[b] - mean[b];
        }
        for i in 0..bands {
            let ci = centered[i];
            let row = &mut cov[i * bands..i * bands + i + 1];
            for (j, r) in row.iter_mut().enumerate() {
                *r += ci * centered[j];
            }
        }
    }
    let denom = T::count(n.saturating_sub(1).max(1));
    for i in 0..bands {
        for j in 0..=i {
            let v = cov[i * bands + j] / denom;
            cov[i * bands + j] = v;
            cov[j * bands + i] = v;
        }
    }
    (mean, cov)
}

fn finish_stats<T: Scalar>(
    pixels: &[T],
    bands: usize,
    s: &[T],
    lambda: T,
    global_fallback: bool,
) -> Result<ColumnStats<T>> {
    let (mean, mut cov) = sample_moments(pixels, bands);
    for b in 0..bands {
        let d = cov[b * bands + b];
        cov[b * bands + b] = d + lambda * d;
    }
    let factor = cholesky(&cov, bands)?;
    let target = mean.iter().zip(s).map(|(&m, &sv)| m * sv).collect();
    Ok(ColumnStats {
        mean,
        cov,
        target,
        samples: pixels.len() / bands,
        global_fallback,
        factor,
    })
}

/// Gathers spectra of the selected pixels of column `col` into one buffer.
fn column_pixels<T: Scalar>(cube: &HyperCube<T>, col: usize, include: &[bool]) -> Vec<T> {
    let bands = cube.bands();
    let mut out = Vec::with_capacity(cube.height() * bands);
    for row in 0..cube.height() {
        let p = row * cube.width() + col;
        if include[p] {
            out.extend((0..bands).map(|b| cube.get(row, col, b)));
        }
    }
    out
}

pub(crate) fn column_stats_where<T: Scalar>(
    cube: &HyperCube<T>,
    s: &[T],
    lambda: T,
    include: &[bool],
) -> Result<Vec<ColumnStats<T>>> {
    let bands = cube.bands();
    if s.len() != bands {
        bail!(
            Shape,
            "absorption vector has {} entries, cube has {bands} bands",
            s.len()
        );
    }
    if !(lambda >= T::zero()) {
        bail!(InvalidArgument, "regularizer must be non-negative");
    }
    let columns: Vec<Vec<T>> = (0..cube.width())
        .into_par_iter()
        .map(|c| column_pixels(cube, c, include))
        .collect();
    let needs_global = columns.iter().any(|px| px.len() / bands < bands + 1);
    let global = if needs_global {
        let all: Vec<T> = columns.concat();
        if all.len() / bands < 2 {
            bail!(
                Numeric,
                "only {} background pixels available for statistics",
                all.len() / bands
            );
        }
        Some(finish_stats(&all, bands, s, lambda, true)?)
    } else {
        None
    };
    columns
        .into_par_iter()
        .map(|px| match &global {
            Some(g) if px.len() / bands < bands + 1 => Ok(g.clone()),
            _ => finish_stats(&px, bands, s, lambda, false),
        })
        .collect()
}

/// Mean, regularized covariance and target signature for every column of
/// `cube`, over valid pixels. Columns with fewer than `bands + 1` valid
/// pixels use statistics of the whole cube.
pub fn column_stats<T: Scalar>(
    cube: &HyperCube<T>,
    s: &[T],
    lambda: T,
) -> Result<Vec<ColumnStats<T>>> {
    let include: Vec<bool> = cube.nodata_mask().iter().map(|&n| !n).collect();
    column_stats_where(cube, s, lambda, &include)
}

/// Column-wise matched filter:
/// `α̂(x) = (μ − x)ᵀ Σ⁻¹ t / (tᵀ Σ⁻¹ t)`, clamped at zero. With `t = μ ⊙ s`
/// a pixel darkened by one unit of target (`x = μ − t`) scores exactly one.
pub fn matched_filter<T: Scalar>(
    cube: &HyperCube<T>,
    stats: &[ColumnStats<T>],
) -> Result<ConcentrationMap<T>> {
    apply_filter(cube, stats).map(|(alpha, _)| alpha)
}

/// Filter output plus the per-column standard deviation of the estimate
/// under the background model, `1 / sqrt(tᵀ Σ⁻¹ t)`.
fn apply_filter<T: Scalar>(
    cube: &HyperCube<T>,
    stats: &[ColumnStats<T>],
) -> Result<(ConcentrationMap<T>, Vec<T>)> {
    let (h, w, bands) = (cube.height(), cube.width(), cube.bands());
    if stats.len() != w || stats.iter().any(|s| s.bands() != bands) {
        bail!(
            Shape,
            "statistics cover {} columns, cube is {h}x{w}x{bands}",
            stats.len()
        );
    }
    let per_column: Vec<(Vec<T>, T)> = stats
        .par_iter()
        .enumerate()
        .map(|(col, st)| {
            let weights = st.filter_weights();
            let norm: T = weights.iter().zip(&st.target).map(|(&a, &b)| a * b).sum();
            if !(norm > T::zero()) || !norm.is_finite() {
                bail!(
                    Numeric,
                    "target has no energy after whitening in column {col} (tᵀΣ⁻¹t = {norm})"
                );
            }
            let offset: T = weights.iter().zip(&st.mean).map(|(&a, &b)| a * b).sum();
            let column = (0..h)
                .map(|row| {
                    if !cube.is_valid(row, col) {
                        return Ok(T::zero());
                    }
                    let proj: T = (0..bands).map(|b| weights[b] * cube.get(row, col, b)).sum();
                    let a = (offset - proj) / norm;
                    if !a.is_finite() {
                        bail!(Numeric, "non-finite estimate at ({row}, {col})");
                    }
                    Ok(a.max(T::zero()))
                })
                .collect::<Result<Vec<T>>>()?;
            Ok((column, norm.sqrt().recip()))
        })
        .collect::<Result<_>>()?;
    let mut alpha = vec![T::zero(); h * w];
    for (col, (vals, _)) in per_column.iter().enumerate() {
        for (row, &v) in vals.iter().enumerate() {
            alpha[row * w + col] = v;
        }
    }
    let sigma = per_column.iter().map(|(_, s)| *s).collect();
    Ok((ConcentrationMap::new(h, w, alpha)?, sigma))
}

/// Estimates above this many standard deviations are treated as plume when
/// re-estimating the background.
pub const BACKGROUND_Z: f64 = 3.0;

/// Matched filter with background re-estimation. After the first pass,
/// statistics are recomputed from pixels whose estimate lies within
/// [`BACKGROUND_Z`] standard deviations of zero, then the filter runs again.
/// One iteration is the plain filter.
pub fn iterate_mf<T: Scalar>(
    cube: &HyperCube<T>,
    s: &[T],
    iterations: usize,
    lambda: T,
) -> Result<ConcentrationMap<T>> {
    if iterations == 0 {
        bail!(
            InvalidArgument,
            "at least one matched-filter iteration is required"
        );
    }
    let (mut alpha, mut sigma) = apply_filter(cube, &column_stats(cube, s, lambda)?)?;
    let z = T::lit(BACKGROUND_Z);
    let w = cube.width();
    for _ in 1..iterations {
        let background: Vec<bool> = cube
            .nodata_mask()
            .iter()
            .zip(alpha.alpha())
            .enumerate()
            .map(|(p, (&nodata, &a))| !nodata && a <= z * sigma[p % w])
            .collect();
        if !background.iter().any(|&b| b) {
            bail!(
                Numeric,
                "every pixel is classified as plume; no background left to re-estimate"
            );
        }
        let stats = column_stats_where(cube, s, lambda, &background)?;
        (alpha, sigma) = apply_filter(cube, &stats)?;
    }
    Ok(alpha)
}
