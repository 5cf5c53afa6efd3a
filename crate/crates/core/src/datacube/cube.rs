use crate::error::{bail, Result};
use crate::scalar::{cast, Scalar};

/// Fill value written into every band of a nodata pixel unless a cube says
/// otherwise.
pub const DEFAULT_NODATA: f64 = -9999.0;

/// Radiance datacube of `height × width` pixels and `bands` spectral bands.
///
/// Samples are stored band-sequential (band-major, then row-major), which is
/// both the on-disk layout and the channel-first layout the segmenter
/// consumes. Every band of a nodata pixel holds `nodata_value`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube<T> {
    height: usize,
    width: usize,
    band_centers: Vec<f64>,
    data: Vec<T>,
    nodata: Vec<bool>,
    nodata_value: T,
}

impl<T: Scalar> HyperCube<T> {
    /// Builds a cube, checking every invariant. Data at nodata pixels is
    /// overwritten with `nodata_value`.
    pub fn new(
        height: usize,
        width: usize,
        band_centers: Vec<f64>,
        mut data: Vec<T>,
        nodata: Vec<bool>,
        nodata_value: T,
    ) -> Result<Self> {
        let bands = band_centers.len();
        if height == 0 || width == 0 || bands == 0 {
            bail!(
                Shape,
                "cube extent must be non-empty, got {height}x{width}x{bands}"
            );
        }
        check_band_centers(&band_centers)?;
        let plane = height * width;
        if data.len() != plane * bands {
            bail!(
                Shape,
                "cube data has {} values, expected {}",
                data.len(),
                plane * bands
            );
        }
        if nodata.len() != plane {
            bail!(
                Shape,
                "nodata mask has {} entries, expected {plane}",
                nodata.len()
            );
        }
        for b in 0..bands {
            let band = &mut data[b * plane..(b + 1) * plane];
            for (p, v) in band.iter_mut().enumerate() {
                if nodata[p] {
                    *v = nodata_value;
                } else if !v.is_finite() {
                    bail!(Format, "non-finite radiance at pixel {p}, band {b}");
                }
            }
        }
        Ok(Self {
            height,
            width,
            band_centers,
            data,
            nodata,
            nodata_value,
        })
    }

    /// Cube with every pixel valid.
    pub fn from_data(
        height: usize,
        width: usize,
        band_centers: Vec<f64>,
        data: Vec<T>,
    ) -> Result<Self> {
        let nodata = vec![false; height * width];
        Self::new(
            height,
            width,
            band_centers,
            data,
            nodata,
            T::lit(DEFAULT_NODATA),
        )
    }

    /// Cube where every valid pixel carries the same spectrum.
    pub fn constant(
        height: usize,
        width: usize,
        band_centers: Vec<f64>,
        spectrum: &[T],
    ) -> Result<Self> {
        if spectrum.len() != band_centers.len() {
            bail!(
                Shape,
                "spectrum has {} bands, axis has {}",
                spectrum.len(),
                band_centers.len()
            );
        }
        let plane = height * width;
        let data = spectrum
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, plane))
            .collect();
        Self::from_data(height, width, band_centers, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.band_centers.len()
    }

    pub fn band_centers(&self) -> &[f64] {
        &self.band_centers
    }

    pub fn nodata_value(&self) -> T {
        self.nodata_value
    }

    /// Band-sequential samples.
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn nodata_mask(&self) -> &[bool] {
        &self.nodata
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> T {
        self.data[(band * self.height + row) * self.width + col]
    }

    pub fn band(&self, band: usize) -> &[T] {
        let plane = self.plane_len();
        &self.data[band * plane..(band + 1) * plane]
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        !self.nodata[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.nodata.iter().filter(|&&n| !n).count()
    }

    /// Spectrum of one pixel, copied out of the band-sequential buffer.
    pub fn spectrum(&self, row: usize, col: usize) -> Vec<T> {
        let plane = self.plane_len();
        let p = row * self.width + col;
        (0..self.bands())
            .map(|b| self.data[b * plane + p])
            .collect()
    }

    /// Applies `f(pixel_index, band, value)` to every valid sample.
    pub fn map_valid(&self, mut f: impl FnMut(usize, usize, T) -> T) -> Result<Self> {
        let plane = self.plane_len();
        let mut data = self.data.clone();
        for b in 0..self.bands() {
            for p in 0..plane {
                if !self.nodata[p] {
                    let i = b * plane + p;
                    data[i] = f(p, b, data[i]);
                }
            }
        }
        Self::new(
            self.height,
            self.width,
            self.band_centers.clone(),
            data,
            self.nodata.clone(),
            self.nodata_value,
        )
    }

    /// Converts the element type.
    pub fn cast<U: Scalar>(&self) -> HyperCube<U> {
        HyperCube {
            height: self.height,
            width: self.width,
            band_centers: self.band_centers.clone(),
            data: self.data.iter().map(|&v| cast(v)).collect(),
            nodata: self.nodata.clone(),
            nodata_value: cast(self.nodata_value),
        }
    }

    /// Keeps only the bands whose centers fall inside one of the closed
    /// `(low, high)` nanometer intervals. Intervals must be ascending and
    /// disjoint.
    pub fn select_bands(&self, ranges: &[(f64, f64)]) -> Result<Self> {
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo <= hi) {
                bail!(InvalidArgument, "band range {lo}-{hi} is inverted");
            }
            if i > 0 && ranges[i - 1].1 >= lo {
                bail!(
                    InvalidArgument,
                    "band ranges must be ascending and non-overlapping"
                );
            }
        }
        let keep: Vec<usize> = self
            .band_centers
            .iter()
            .enumerate()
            .filter(|(_, &c)| ranges.iter().any(|&(lo, hi)| c >= lo && c <= hi))
            .map(|(i, _)| i)
            .collect();
        if keep.is_empty() {
            bail!(InvalidArgument, "no band center falls inside {ranges:?}");
        }
        let plane = self.plane_len();
        let mut data = Vec::with_capacity(keep.len() * plane);
        for &b in &keep {
            data.extend_from_slice(self.band(b));
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            band_centers: keep.iter().map(|&b| self.band_centers[b]).collect(),
            data,
            nodata: self.nodata.clone(),
            nodata_value: self.nodata_value,
        })
    }
}

pub(crate) fn check_band_centers(centers: &[f64]) -> Result<()> {
    if let Some(bad) = centers.iter().position(|c| !c.is_finite()) {
        bail!(Format, "band center {bad} is not finite");
    }
    if let Some(w) = centers.windows(2).position(|w| w[1] <= w[0]) {
        bail!(
            Format,
            "band centers must be strictly increasing (index {} -> {})",
            w,
            w + 1
        );
    }
    Ok(())
}

/// Evenly spaced band axis, `count` centers starting at `first_nm`.
pub fn uniform_axis(first_nm: f64, spacing_nm: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| first_nm + spacing_nm * i as f64)
        .collect()
}
