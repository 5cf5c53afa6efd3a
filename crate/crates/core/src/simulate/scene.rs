//! Procedural clean backgrounds for desk-scale experiments: smoothly mixed
//! surface materials under a solar-like illumination curve, sensor noise,
//! and linear confounder features whose absorption partly mimics methane.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::signature::SpectralSignature;
use crate::datacube::HyperCube;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ToySceneConfig {
    pub size: usize,
    pub band_centers: Vec<f64>,
    /// Relative standard deviation of per-sample sensor noise.
    pub noise: f64,
    /// Inclusive range of confounder segments per scene.
    pub stripes: (usize, usize),
    pub stripe_width: (f64, f64),
    /// Confounder depth expressed as a methane-equivalent concentration at
    /// the strongest absorbing band, ppm·m.
    pub confounder_strength: (f64, f64),
    /// Fraction of the confounder absorption shape that follows methane;
    /// the rest is a broad mineral-like feature.
    pub confounder_overlap: f64,
}

/// Eight short-wave infrared bands straddling the 2.3 µm methane window.
pub fn toy_band_centers() -> Vec<f64> {
    vec![
        2120.0, 2180.0, 2235.0, 2270.0, 2305.0, 2330.0, 2360.0, 2410.0,
    ]
}

impl Default for ToySceneConfig {
    fn default() -> Self {
        Self {
            size: 64,
            band_centers: toy_band_centers(),
            noise: 0.003,
            stripes: (1, 3),
            stripe_width: (1.5, 3.5),
            confounder_strength: (1200.0, 3500.0),
            confounder_overlap: 0.8,
        }
    }
}

fn smooth_field(size: usize, rng: &mut impl Rng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.02..0.12),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let v: f64 = waves
                .iter()
                .map(|&(freq, dir, phase, amp)| {
                    amp * (freq
                        * (r as f64 * dir.cos() + c as f64 * dir.sin())
                        * std::f64::consts::TAU
                        / 2.0
                        + phase)
                        .sin()
                })
                .sum();
            out.push(v);
        }
    }
    out
}

fn endmember(kind: usize, nm: f64) -> f64 {
    let x = (nm - 2100.0) / 300.0;
    match kind {
        0 => 0.30 + 0.08 * x,
        1 => 0.14 + 0.03 * (x * 3.5).cos(),
        _ => 0.42 - 0.06 * x - 0.04 * (-((nm - 2345.0) / 30.0).powi(2)).exp(),
    }
}

/// Absorption shape of confounding surfaces, scaled to peak 1.
pub fn confounder_shape(sig: &SpectralSignature, band_centers: &[f64], overlap: f64) -> Vec<f64> {
    let s: Vec<f64> = band_centers.iter().map(|&c| sig.at(c)).collect();
    let smax = s.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let broad: Vec<f64> = band_centers
        .iter()
        .map(|&c| (-0.5 * ((c - 2200.0) / 45.0).powi(2)).exp())
        .collect();
    let q: Vec<f64> = s
        .iter()
        .zip(&broad)
        .map(|(&sv, &bv)| overlap * sv / smax + (1.0 - overlap) * bv)
        .collect();
    let qmax = q.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    q.iter().map(|v| v / qmax).collect()
}

/// Generates one clean scene.
pub fn toy_scene<T: Scalar>(
    cfg: &ToySceneConfig,
    sig: &SpectralSignature,
    rng: &mut impl Rng,
) -> Result<HyperCube<T>> {
    let n = cfg.size;
    let bands = cfg.band_centers.len();
    let smax = cfg
        .band_centers
        .iter()
        .map(|&c| sig.at(c))
        .fold(0.0, f64::max);
    let conf = confounder_shape(sig, &cfg.band_centers, cfg.confounder_overlap);

    let fields: Vec<Vec<f64>> = (0..3).map(|_| smooth_field(n, rng)).collect();
    let brightness = smooth_field(n, rng);
    let mut depth = vec![0.0f64; n * n];
    let stripes = rng.random_range(cfg.stripes.0..=cfg.stripes.1.max(cfg.stripes.0));
    for _ in 0..stripes {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (sy, sx) = theta.sin_cos();
        let cy = rng.random_range(0.0..n as f64);
        let cx = rng.random_range(0.0..n as f64);
        let half_len = rng.random_range(0.25..0.8) * n as f64;
        let half_w = rng.random_range(cfg.stripe_width.0..=cfg.stripe_width.1) / 2.0;
        let k = rng.random_range(cfg.confounder_strength.0..=cfg.confounder_strength.1) * smax;
        for r in 0..n {
            for c in 0..n {
                let (y, x) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                let along = x * sx + y * sy;
                let across = -x * sy + y * sx;
                if along.abs() <= half_len && across.abs() <= half_w {
                    let d = &mut depth[r * n + c];
                    *d = d.max(k);
                }
            }
        }
    }

    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("valid noise std");
    let mut data = vec![T::zero(); bands * n * n];
    for p in 0..n * n {
        let w: Vec<f64> = fields.iter().map(|f| (1.5 * f[p]).exp()).collect();
        let total: f64 = w.iter().sum();
        let gain = 1.0 + 0.15 * brightness[p].tanh();
        for (b, &nm) in cfg.band_centers.iter().enumerate() {
            let rho: f64 = w
                .iter()
                .enumerate()
                .map(|(k, wk)| wk / total * endmember(k, nm))
                .sum();
            let irradiance = 10.0 * (2000.0 / nm).powi(3);
            let clean = irradiance * rho * gain * (-depth[p] * conf[b]).exp();
            let v = clean * (1.0 + noise.sample(rng));
            data[b * n * n + p] = T::lit(v.max(1e-6));
        }
    }
    HyperCube::from_data(n, n, cfg.band_centers.clone(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scene_is_positive_and_deterministic() {
        let sig = SpectralSignature::synthetic_methane();
        let cfg = ToySceneConfig::default();
        let a: HyperCube<f32> = toy_scene(&cfg, &sig, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b: HyperCube<f32> = toy_scene(&cfg, &sig, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.height(), a.bands()), (64, 8));
        assert!(a.data().iter().all(|&v| v > 0.0));
    }

    #[test]
    fn confounder_shape_mixes_methane() {
        let sig = SpectralSignature::synthetic_methane();
        let full = confounder_shape(&sig, &toy_band_centers(), 1.0);
        let s: Vec<f64> = toy_band_centers().iter().map(|&c| sig.at(c)).collect();
        let smax = s.iter().copied().fold(0.0, f64::max);
        for (q, sv) in full.iter().zip(&s) {
            assert!((q - sv / smax).abs() < 1e-12);
        }
        let none = confounder_shape(&sig, &toy_band_centers(), 0.0);
        assert!(none[1] > none[4]);
    }
}
