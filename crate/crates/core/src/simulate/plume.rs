use std::path::Path;

use rand::Rng;

use crate::datacube::{load_score_map, save_score_map, BinaryMask, ScoreMap};
use crate::error::{bail, Error, Result};
use crate::scalar::Scalar;

/// Per-pixel gas column concentration in ppm·m.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationMap<T> {
    height: usize,
    width: usize,
    alpha: Vec<T>,
}

impl<T: Scalar> ConcentrationMap<T> {
    pub fn new(height: usize, width: usize, alpha: Vec<T>) -> Result<Self> {
        if alpha.len() != height * width {
            bail!(
                Shape,
                "concentration map {height}x{width} needs {} values, got {}",
                height * width,
                alpha.len()
            );
        }
        if let Some(i) = alpha.iter().position(|a| !a.is_finite()) {
            bail!(Numeric, "non-finite concentration at pixel {i}");
        }
        if let Some(i) = alpha.iter().position(|&a| a < T::zero()) {
            bail!(
                InvalidArgument,
                "negative concentration {} at pixel {i}",
                alpha[i]
            );
        }
        Ok(Self {
            height,
            width,
            alpha,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            alpha: vec![T::zero(); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn alpha(&self) -> &[T] {
        &self.alpha
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.alpha[row * self.width + col]
    }

    /// Pixels with non-zero concentration.
    pub fn support(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.alpha.iter().map(|&a| a > T::zero()).collect(),
        }
    }

    pub fn positive_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a > T::zero()).count()
    }

    pub fn max(&self) -> T {
        self.alpha.iter().copied().fold(T::zero(), T::max)
    }

    pub fn to_score_map(&self) -> ScoreMap<T> {
        ScoreMap {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.alpha.clone(),
        }
    }

    pub fn from_score_map(map: &ScoreMap<T>) -> Result<Self> {
        if map.channels != 1 {
            bail!(
                Shape,
                "concentration map must have one channel, got {}",
                map.channels
            );
        }
        Self::new(map.height, map.width, map.data.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_score_map(&self.to_score_map(), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_score_map(&load_score_map(path)?)
    }
}

/// Composites `scale · patch` into `scene` at `origin` with a per-pixel
/// maximum, so overlapping plumes never add up.
pub fn place_plume<T: Scalar>(
    scene: &ConcentrationMap<T>,
    patch: &ConcentrationMap<T>,
    (r0, c0): (usize, usize),
    scale: T,
) -> Result<ConcentrationMap<T>> {
    if !(scale >= T::zero()) || !scale.is_finite() {
        bail!(
            InvalidArgument,
            "plume scale must be finite and non-negative"
        );
    }
    if r0 + patch.height > scene.height || c0 + patch.width > scene.width {
        bail!(
            InvalidArgument,
            "{}x{} plume at ({r0}, {c0}) exceeds the {}x{} scene",
            patch.height,
            patch.width,
            scene.height,
            scene.width
        );
    }
    let mut out = scene.clone();
    for r in 0..patch.height {
        for c in 0..patch.width {
            let dst = &mut out.alpha[(r0 + r) * out.width + c0 + c];
            *dst = dst.max(scale * patch.get(r, c));
        }
    }
    Ok(out)
}

/// Collection of real or synthetic plume concentration patches.
#[derive(Debug, Clone, PartialEq)]
pub struct PlumeLibrary<T> {
    plumes: Vec<ConcentrationMap<T>>,
}

impl<T: Scalar> PlumeLibrary<T> {
    pub fn new(plumes: Vec<ConcentrationMap<T>>) -> Result<Self> {
        if let Some(i) = plumes.iter().position(|p| p.positive_count() == 0) {
            bail!(InvalidArgument, "plume {i} has no positive pixel");
        }
        Ok(Self { plumes })
    }

    pub fn len(&self) -> usize {
        self.plumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plumes.is_empty()
    }

    pub fn plumes(&self) -> &[ConcentrationMap<T>] {
        &self.plumes
    }

    pub fn get(&self, i: usize) -> &ConcentrationMap<T> {
        &self.plumes[i]
    }

    /// Plume indices grouped into size quartiles by positive-pixel count,
    /// smallest first. Empty groups are dropped.
    pub fn size_strata(&self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.plumes.len()).collect();
        order.sort_by_key(|&i| (self.plumes[i].positive_count(), i));
        let n = order.len();
        (0..4)
            .map(|q| order[q * n / 4..(q + 1) * n / 4].to_vec())
            .filter(|g| !g.is_empty())
            .collect()
    }

    /// Picks a size stratum uniformly, then a plume uniformly within it.
    pub fn sample_index(&self, rng: &mut impl Rng) -> usize {
        let strata = self.size_strata();
        let stratum = &strata[rng.random_range(0..strata.len())];
        stratum[rng.random_range(0..stratum.len())]
    }

    /// Reads every `*.hdr.json` single-channel raster in `dir`, sorted by
    /// file name.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.to_string_lossy()
                    .ends_with(crate::datacube::io::HEADER_SUFFIX)
            })
            .collect();
        paths.sort();
        let plumes = paths
            .iter()
            .map(|p| ConcentrationMap::load(p))
            .collect::<Result<Vec<_>>>()?;
        if plumes.is_empty() {
            bail!(Format, "no plume rasters in {}", dir.display());
        }
        Self::new(plumes)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, p) in self.plumes.iter().enumerate() {
            p.save(&dir.join(format!("plume_{i:04}")))?;
        }
        Ok(())
    }
}

/// Shape parameters for procedurally generated plumes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlumeShape {
    /// Patch side length range in pixels.
    pub size: (usize, usize),
    /// Peak concentration range in ppm·m.
    pub peak: (f64, f64),
    /// Concentrations below this fraction of the peak are cut to zero,
    /// which gives the plume a definite outline.
    pub floor_fraction: f64,
}

impl Default for PlumeShape {
    fn default() -> Self {
        Self {
            size: (10, 35),
            peak: (3000.0, 8000.0),
            floor_fraction: 0.15,
        }
    }
}

/// Wind-blown plume: a source puff stretched along a random heading with
/// lateral spread growing downwind and a lumpy texture.
pub fn synthetic_plume<T: Scalar>(shape: &PlumeShape, rng: &mut impl Rng) -> ConcentrationMap<T> {
    let side = rng.random_range(shape.size.0..=shape.size.1.max(shape.size.0));
    let peak = rng.random_range(shape.peak.0..=shape.peak.1.max(shape.peak.0));
    let heading = rng.random_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = heading.sin_cos();
    let half = side as f64 / 2.0;
    // source sits upwind of the patch center
    let (sy, sx) = (half - dy * half * 0.6, half - dx * half * 0.6);
    let length = side as f64 * rng.random_range(0.55..0.9);
    let spread = rng.random_range(0.12..0.3);
    let lumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.3..1.2),
                rng.random_range(0.3..1.2),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.15..0.35),
            )
        })
        .collect();
    let mut alpha = vec![T::zero(); side * side];
    let mut any = false;
    for r in 0..side {
        for c in 0..side {
            let (y, x) = (r as f64 + 0.5 - sy, c as f64 + 0.5 - sx);
            let along = x * dx + y * dy;
            let across = -x * dy + y * dx;
            if along < -1.5 {
                continue;
            }
            let width = 1.0 + spread * along.max(0.0);
            let decay = (-along.max(0.0) / length).exp();
            let lateral = (-0.5 * (across / width).powi(2)).exp();
            let texture: f64 = 1.0
                + lumps
                    .iter()
                    .map(|&(fy, fx, ph, amp)| {
                        amp * (fy * r as f64 * 0.5 + fx * c as f64 * 0.5 + ph).sin()
                    })
                    .sum::<f64>()
                    / 2.0;
            let v = (decay * lateral * texture).max(0.0);
            if v >= shape.floor_fraction {
                alpha[r * side + c] = T::lit(peak * v.min(1.5));
                any = true;
            }
        }
    }
    if !any {
        let mid = side / 2;
        alpha[mid * side + mid] = T::lit(peak);
    }
    ConcentrationMap {
        height: side,
        width: side,
        alpha,
    }
}

/// Library of `count` procedural plumes.
pub fn synthetic_library<T: Scalar>(
    count: usize,
    shape: &PlumeShape,
    rng: &mut impl Rng,
) -> PlumeLibrary<T> {
    PlumeLibrary {
        plumes: (0..count).map(|_| synthetic_plume(shape, rng)).collect(),
    }
}
