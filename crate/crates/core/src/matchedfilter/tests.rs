use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::datacube::uniform_axis;
use crate::simulate::inject_plume;

const SPECTRUM: [f64; 8] = [1.0, 1.15, 0.95, 1.3, 1.05, 0.9, 1.2, 1.1];
const ABSORPTION: [f64; 8] = [2e-6, 5e-6, 1e-5, 8e-6, 3e-6, 9e-6, 6e-6, 4e-6];

/// Constant background spectrum with relative Gaussian noise `sigma`.
fn noisy_background(size: usize, sigma: f64, seed: u64) -> HyperCube<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    let plane = size * size;
    let data = (0..8 * plane)
        .map(|i| SPECTRUM[i / plane] * (1.0 + normal.sample(&mut rng)))
        .collect();
    HyperCube::from_data(size, size, uniform_axis(2100.0, 40.0, 8), data).unwrap()
}

/// One plume pixel per column on the diagonal, α* cycling 100..1000.
fn diagonal_plume(size: usize) -> ConcentrationMap<f64> {
    let mut a = vec![0.0; size * size];
    for i in 0..size {
        a[i * size + i] = 100.0 * (1 + i % 10) as f64;
    }
    ConcentrationMap::new(size, size, a).unwrap()
}

fn dense_solve(cov: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let m = nalgebra::DMatrix::from_row_slice(n, n, cov);
    let b = nalgebra::DVector::from_column_slice(rhs);
    m.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn constant_column_has_zero_spread_and_is_singular() {
    let cube =
        HyperCube::<f64>::constant(12, 2, uniform_axis(2000.0, 10.0, 3), &[2.0, 3.0, 4.0]).unwrap();
    let pixels: Vec<f64> = (0..12).flat_map(|r| cube.spectrum(r, 0)).collect();
    let (mean, cov) = sample_moments(&pixels, 3);
    assert_eq!(mean, vec![2.0, 3.0, 4.0]);
    // λ·diag(Σ) of a zero covariance is still zero
    assert!(cov.iter().all(|&v| v == 0.0));
    assert!(matches!(
        column_stats(&cube, &[1e-5; 3], 1e-4),
        Err(crate::Error::Numeric(_))
    ));
}

#[test]
fn two_band_covariance_matches_hand_sum() {
    let samples = [(1.0, 2.0), (2.0, 1.0), (3.0, 5.0), (4.0, 4.0), (0.5, 3.0)];
    let data: Vec<f64> = samples
        .iter()
        .map(|s| s.0)
        .chain(samples.iter().map(|s| s.1))
        .collect();
    let cube = HyperCube::from_data(5, 1, vec![2000.0, 2100.0], data).unwrap();
    let lambda = 0.01;
    let stats = column_stats(&cube, &[1e-5, 2e-5], lambda).unwrap();
    let n = samples.len() as f64;
    let mx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in &samples {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let expected = [
        sxx / (n - 1.0) * (1.0 + lambda),
        sxy / (n - 1.0),
        sxy / (n - 1.0),
        syy / (n - 1.0) * (1.0 + lambda),
    ];
    for (a, b) in stats[0].cov.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert_eq!(stats[0].mean, vec![mx, my]);
    assert_eq!(stats[0].target, vec![mx * 1e-5, my * 2e-5]);
}

#[test]
fn rank_deficient_without_regularizer_is_singular() {
    // second band is an exact multiple of the first
    let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let data: Vec<f64> = xs
        .iter()
        .copied()
        .chain(xs.iter().map(|x| 2.0 * x))
        .collect();
    let cube = HyperCube::from_data(5, 1, vec![2000.0, 2100.0], data).unwrap();
    assert!(column_stats(&cube, &[1e-5, 1e-5], 0.0).is_err());
    assert!(column_stats(&cube, &[1e-5, 1e-5], 1e-3).is_ok());
}

#[test]
fn narrow_columns_fall_back_to_global_statistics() {
    let cube = noisy_background(4, 1e-3, 1);
    let stats = column_stats(&cube, &ABSORPTION, 1e-4).unwrap();
    assert!(stats.iter().all(|s| s.global_fallback && s.samples == 16));
    let tall = noisy_background(16, 1e-3, 1);
    assert!(column_stats(&tall, &ABSORPTION, 1e-4)
        .unwrap()
        .iter()
        .all(|s| !s.global_fallback));
}

#[test]
fn mean_pixel_scores_exactly_zero() {
    let cube = noisy_background(16, 1e-3, 2);
    let stats = column_stats(&cube, &ABSORPTION, 1e-4).unwrap();
    let probe = cube
        .map_valid(|p, b, v| if p % 16 == 3 { stats[3].mean[b] } else { v })
        .unwrap();
    let alpha = matched_filter(&probe, &stats).unwrap();
    for r in 0..16 {
        assert_eq!(alpha.get(r, 3), 0.0);
    }
}

#[test]
fn one_unit_of_target_scores_one() {
    let cube = noisy_background(16, 1e-3, 3);
    let stats = column_stats(&cube, &ABSORPTION, 1e-4).unwrap();
    let st = &stats[5];
    let probe = cube
        .map_valid(|p, b, v| {
            if p == 7 * 16 + 5 {
                st.mean[b] - st.target[b]
            } else {
                v
            }
        })
        .unwrap();
    let alpha = matched_filter(&probe, &stats).unwrap();
    // independent route: dense LU solve of the same normal equations
    let w = dense_solve(&st.cov, &st.target);
    let x = probe.spectrum(7, 5);
    let num: f64 = (0..8).map(|b| (st.mean[b] - x[b]) * w[b]).sum();
    let den: f64 = (0..8).map(|b| st.target[b] * w[b]).sum();
    assert!((num / den - 1.0).abs() < 1e-9);
    assert!((alpha.get(7, 5) - 1.0).abs() < 1e-9);
}

fn relative_errors(est: &ConcentrationMap<f64>, truth: &ConcentrationMap<f64>) -> Vec<f64> {
    truth
        .alpha()
        .iter()
        .zip(est.alpha())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, e)| (e - t).abs() / t)
        .collect()
}

#[test]
fn small_signal_recovery_and_iteration_gain() {
    // band-flat absorption keeps the Beer-Lambert curvature along t, so a
    // plume pixel inside its own column covariance is not whitened away
    let flat = [5e-6; 8];
    let clean = noisy_background(64, 1e-7, 4);
    let truth = diagonal_plume(64);
    assert!(truth.max() * 5e-6 <= 0.01);
    let cube = inject_plume(&clean, &truth, &flat).unwrap();
    let one = iterate_mf(&cube, &flat, 1, 1e-4).unwrap();
    let two = iterate_mf(&cube, &flat, 2, 1e-4).unwrap();
    let e1 = relative_errors(&one, &truth);
    let e2 = relative_errors(&two, &truth);
    assert!(
        e1.iter().all(|&e| e < 0.02),
        "max {:?}",
        e1.iter().copied().fold(0.0, f64::max)
    );
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&e2) <= mean(&e1));
}

#[test]
fn background_re_estimation_recovers_shaped_signature() {
    let clean = noisy_background(64, 2e-6, 4);
    let truth = diagonal_plume(64);
    let cube = inject_plume(&clean, &truth, &ABSORPTION).unwrap();
    let two = iterate_mf(&cube, &ABSORPTION, 2, 1e-4).unwrap();
    let e2 = relative_errors(&two, &truth);
    assert!(
        e2.iter().all(|&e| e < 0.01),
        "max {:?}",
        e2.iter().copied().fold(0.0, f64::max)
    );
}

#[test]
fn repeated_iterations_do_not_drift_on_noise() {
    let sigma = 1e-4;
    let cube = noisy_background(64, sigma, 8);
    let floor = sigma / ABSORPTION.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mean_abs = |it| {
        let a = iterate_mf(&cube, &ABSORPTION, it, 1e-4).unwrap();
        a.alpha().iter().sum::<f64>() / a.alpha().len() as f64
    };
    let (one, ten) = (mean_abs(1), mean_abs(10));
    assert!(ten < one + 0.1 * floor, "{one} -> {ten}");
}

#[test]
fn single_iteration_equals_plain_filter() {
    let cube = inject_plume(
        &noisy_background(24, 1e-4, 5),
        &diagonal_plume(24),
        &ABSORPTION,
    )
    .unwrap();
    let plain = matched_filter(&cube, &column_stats(&cube, &ABSORPTION, 1e-4).unwrap()).unwrap();
    assert_eq!(iterate_mf(&cube, &ABSORPTION, 1, 1e-4).unwrap(), plain);
    assert!(iterate_mf(&cube, &ABSORPTION, 0, 1e-4).is_err());
}

#[test]
fn plume_free_scene_stays_below_noise_floor() {
    let sigma = 1e-4;
    let cube = noisy_background(64, sigma, 6);
    let alpha = iterate_mf(&cube, &ABSORPTION, 3, 1e-4).unwrap();
    // estimator standard deviation for white relative noise
    let floor = sigma / ABSORPTION.iter().map(|s| s * s).sum::<f64>().sqrt();
    let mean_abs = alpha.alpha().iter().map(|a| a.abs()).sum::<f64>() / alpha.alpha().len() as f64;
    assert!(mean_abs < floor, "{mean_abs} >= {floor}");
}

#[test]
fn estimate_is_invariant_to_radiance_scale() {
    let cube = inject_plume(
        &noisy_background(32, 1e-3, 7),
        &diagonal_plume(32),
        &ABSORPTION,
    )
    .unwrap();
    let base = iterate_mf(&cube, &ABSORPTION, 1, 1e-4).unwrap();
    let scaled = iterate_mf(
        &cube.map_valid(|_, _, v| v * 3.7).unwrap(),
        &ABSORPTION,
        1,
        1e-4,
    )
    .unwrap();
    for (a, b) in base.alpha().iter().zip(scaled.alpha()) {
        assert!(
            (a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + 1e-9,
            "{a} vs {b}"
        );
    }
}

#[test]
fn threshold_is_inclusive() {
    let a = ConcentrationMap::new(1, 4, vec![100.0, 499.0, 500.0, 900.0]).unwrap();
    assert_eq!(
        threshold_map(&a, 500.0).data,
        vec![false, false, true, true]
    );
    assert_eq!(threshold_map(&a, 0.0).count(), 4);
    assert_eq!(
        threshold_map(&ConcentrationMap::new(1, 2, vec![0.0, 3.0]).unwrap(), 0.0).count(),
        2
    );
    assert_eq!(threshold_map(&a, f64::INFINITY).count(), 0);
}

// Brute-force morphology: erosion as the set of translations that keep the
// kernel inside the mask, dilation as the union of kernel copies.

fn kernel_points(k: MorphKernel) -> Vec<(isize, isize)> {
    let v = k.values();
    let mut out = Vec::new();
    for (r, row) in v.iter().enumerate() {
        for (c, &on) in row.iter().enumerate() {
            if on {
                out.push((r as isize - 1, c as isize - 1));
            }
        }
    }
    out
}

fn brute_erode(m: &BinaryMask, k: MorphKernel) -> BinaryMask {
    let mut out = BinaryMask::zeros(m.height, m.width);
    let (h, w) = (m.height as isize, m.width as isize);
    for r in 0..h {
        for c in 0..w {
            let inside = kernel_points(k).into_iter().all(|(dr, dc)| {
                let (y, x) = (r + dr, c + dc);
                y >= 0 && x >= 0 && y < h && x < w && m.data[(y * w + x) as usize]
            });
            out.data[(r * w + c) as usize] = inside;
        }
    }
    out
}

fn brute_dilate(m: &BinaryMask, k: MorphKernel) -> BinaryMask {
    let mut out = BinaryMask::zeros(m.height, m.width);
    let (h, w) = (m.height as isize, m.width as isize);
    for (i, _) in m.data.iter().enumerate().filter(|(_, &v)| v) {
        let (r, c) = (i as isize / w, i as isize % w);
        for (dr, dc) in kernel_points(k) {
            let (y, x) = (r + dr, c + dc);
            if y >= 0 && x >= 0 && y < h && x < w {
                out.data[(y * w + x) as usize] = true;
            }
        }
    }
    out
}

fn embedded(pattern: u16) -> BinaryMask {
    let mut m = BinaryMask::zeros(7, 7);
    for bit in 0..9 {
        if pattern >> bit & 1 == 1 {
            m.set(2 + bit / 3, 2 + bit % 3, true);
        }
    }
    m
}

fn random_mask(rng: &mut impl Rng, n: usize, p: f64) -> BinaryMask {
    BinaryMask::new(n, n, (0..n * n).map(|_| rng.random_bool(p)).collect()).unwrap()
}

#[test]
fn morphology_matches_brute_force_on_all_3x3_patterns() {
    for k in [MorphKernel::Cross3, MorphKernel::Ones3] {
        for pattern in 0..512u16 {
            let m = embedded(pattern);
            assert_eq!(erode(&m, k), brute_erode(&m, k));
            assert_eq!(dilate(&m, k), brute_dilate(&m, k));
            assert_eq!(opening(&m, k), brute_dilate(&brute_erode(&m, k), k));
            // duality holds away from the outside-is-zero border ring
            let dual = erode(&m.not(), k).not();
            let direct = dilate(&m, k);
            for r in 1..6 {
                for c in 1..6 {
                    assert_eq!(direct.get(r, c), dual.get(r, c));
                }
            }
        }
    }
}

#[test]
fn opening_is_idempotent_on_random_masks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let m = random_mask(&mut rng, 16, 0.55);
        for k in [MorphKernel::Cross3, MorphKernel::Ones3] {
            assert_eq!(erode(&m, k), brute_erode(&m, k));
            assert_eq!(dilate(&m, k), brute_dilate(&m, k));
            let once = opening(&m, k);
            assert_eq!(opening(&once, k), once);
        }
    }
}

#[test]
fn opening_removes_isolated_pixel_and_keeps_block() {
    for k in [MorphKernel::Cross3, MorphKernel::Ones3] {
        let mut speck = BinaryMask::zeros(5, 5);
        speck.set(2, 2, true);
        assert_eq!(opening(&speck, k).count(), 0);
    }
    let mut block = BinaryMask::zeros(5, 5);
    for r in 1..4 {
        for c in 1..4 {
            block.set(r, c, true);
        }
    }
    assert_eq!(opening(&block, MorphKernel::Ones3), block);
    assert_eq!(
        opening(&block, MorphKernel::Ones3),
        brute_dilate(&brute_erode(&block, MorphKernel::Ones3), MorphKernel::Ones3)
    );
}

#[test]
fn all_ones_erodes_only_its_border() {
    let m = BinaryMask::ones(6, 6);
    let e = erode(&m, MorphKernel::Ones3);
    for r in 0..6 {
        for c in 0..6 {
            let interior = (1..5).contains(&r) && (1..5).contains(&c);
            assert_eq!(e.get(r, c), interior);
        }
    }
}

#[test]
fn kernel_names_parse() {
    assert_eq!(
        "cross3".parse::<MorphKernel>().unwrap(),
        MorphKernel::Cross3
    );
    assert_eq!("ones3".parse::<MorphKernel>().unwrap(), MorphKernel::Ones3);
    assert!("disk5".parse::<MorphKernel>().is_err());
}

#[test]
fn baseline_on_plume_free_background_is_empty() {
    let cube = noisy_background(64, 1e-3, 12);
    let out = mf_baseline(&cube, &ABSORPTION, &MfSettings::default()).unwrap();
    assert_eq!(out.mask.count(), 0);
}

#[test]
fn baseline_finds_square_plume() {
    let clean = noisy_background(64, 1e-3, 13);
    let mut a = vec![0.0; 64 * 64];
    for r in 20..30 {
        for c in 30..40 {
            a[r * 64 + c] = 2000.0;
        }
    }
    let truth = ConcentrationMap::new(64, 64, a).unwrap();
    let cube = inject_plume(&clean, &truth, &ABSORPTION).unwrap();
    let out = mf_baseline(&cube, &ABSORPTION, &MfSettings::default()).unwrap();
    let t = truth.support();
    let inter = out
        .mask
        .data
        .iter()
        .zip(&t.data)
        .filter(|(a, b)| **a && **b)
        .count();
    let union = out
        .mask
        .data
        .iter()
        .zip(&t.data)
        .filter(|(a, b)| **a || **b)
        .count();
    let iou = inter as f64 / union as f64;
    assert!(iou >= 0.5, "iou {iou}");
}

#[test]
fn salt_noise_does_not_survive_opening() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let n = 32;
    let mut a = vec![0.0; n * n];
    // isolated salt: every picked pixel sits on an even row and column
    for r in (0..n).step_by(2) {
        for c in (0..n).step_by(2) {
            if rng.random_bool(0.4) {
                a[r * n + c] = rng.random_range(600.0..3000.0);
            }
        }
    }
    let alpha = ConcentrationMap::new(n, n, a).unwrap();
    let raw = threshold_map(&alpha, 500.0);
    assert!(raw.count() > 0);
    for k in [MorphKernel::Cross3, MorphKernel::Ones3] {
        let cleaned = opening(&raw, k);
        assert_eq!(cleaned, brute_dilate(&brute_erode(&raw, k), k));
        assert_eq!(cleaned.count(), 0);
    }
}
