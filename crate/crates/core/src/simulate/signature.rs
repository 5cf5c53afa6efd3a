use std::path::Path;

use crate::error::{bail, Error, Result};
use crate::scalar::Scalar;

/// Unit absorption spectrum of a target gas: attenuation per ppm·m at each
/// sampled wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSignature {
    wavelengths: Vec<f64>,
    absorption: Vec<f64>,
}

impl SpectralSignature {
    pub fn new(wavelengths: Vec<f64>, absorption: Vec<f64>) -> Result<Self> {
        if wavelengths.is_empty() {
            bail!(InvalidArgument, "signature has no samples");
        }
        if wavelengths.len() != absorption.len() {
            bail!(
                Shape,
                "signature has {} wavelengths but {} absorption values",
                wavelengths.len(),
                absorption.len()
            );
        }
        if wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            bail!(Format, "signature wavelengths must be strictly increasing");
        }
        if absorption.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            bail!(
                Format,
                "signature absorption must be finite and non-negative"
            );
        }
        Ok(Self {
            wavelengths,
            absorption,
        })
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn absorption(&self) -> &[f64] {
        &self.absorption
    }

    /// Parses two whitespace-separated columns (nm, absorption); `#` starts
    /// a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut wl = Vec::new();
        let mut ab = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(a), Some(b), None) = (cols.next(), cols.next(), cols.next()) else {
                bail!(Format, "line {}: expected two columns", lineno + 1);
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            };
            wl.push(parse(a)?);
            ab.push(parse(b)?);
        }
        Self::new(wl, ab)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# wavelength_nm absorption_per_ppm_m\n");
        for (w, a) in self.wavelengths.iter().zip(&self.absorption) {
            out.push_str(&format!("{w} {a:e}\n"));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Absorption at `nm` by linear interpolation, clamped to the end
    /// samples outside the sampled range.
    pub fn at(&self, nm: f64) -> f64 {
        let w = &self.wavelengths;
        let last = w.len() - 1;
        if nm <= w[0] {
            return self.absorption[0];
        }
        if nm >= w[last] {
            return self.absorption[last];
        }
        let hi = w.partition_point(|&x| x <= nm);
        let lo = hi - 1;
        let t = (nm - w[lo]) / (w[hi] - w[lo]);
        self.absorption[lo] + t * (self.absorption[hi] - self.absorption[lo])
    }

    /// Synthetic methane-like unit absorption: Gaussian absorption features
    /// at the 1.65 µm and 2.3 µm methane windows on a 1 nm grid. Stands in
    /// for a radiative-transfer product, which this crate does not compute.
    pub fn synthetic_methane() -> Self {
        const LINES: [(f64, f64, f64); 9] = [
            // (center nm, width nm, peak absorption per ppm·m)
            (1645.0, 8.0, 0.6e-5),
            (1666.0, 6.0, 1.4e-5),
            (1685.0, 9.0, 0.5e-5),
            (2200.0, 20.0, 0.5e-5),
            (2260.0, 14.0, 1.0e-5),
            (2305.0, 12.0, 2.4e-5),
            (2320.0, 10.0, 2.0e-5),
            (2355.0, 14.0, 1.6e-5),
            (2372.0, 16.0, 1.2e-5),
        ];
        let wavelengths: Vec<f64> = (1400..=2500).map(f64::from).collect();
        let absorption = wavelengths
            .iter()
            .map(|&nm| {
                LINES
                    .iter()
                    .map(|&(c, w, a)| a * (-0.5 * ((nm - c) / w).powi(2)).exp())
                    .sum::<f64>()
                    + 2.0e-8
            })
            .collect();
        Self {
            wavelengths,
            absorption,
        }
    }
}

/// Samples the signature at every band center.
pub fn resample_signature<T: Scalar>(sig: &SpectralSignature, band_centers: &[f64]) -> Vec<T> {
    band_centers.iter().map(|&c| T::lit(sig.at(c))).collect()
}
