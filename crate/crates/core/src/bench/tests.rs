use super::*;
use crate::nn::{Conv, ModelConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::atomic::{AtomicUsize, Ordering};

struct Blank(usize);

impl TileSource for Blank {
    fn granule_shape(&self) -> (usize, usize) {
        (self.0 * 4, 4)
    }

    fn len(&self) -> usize {
        self.0
    }

    fn load(&self, _: usize) -> Result<HyperCube<f32>> {
        HyperCube::constant(4, 4, vec![2300.0], &[1.0])
    }
}

struct Noop;

impl Pipeline for Noop {
    fn name(&self) -> String {
        "noop".into()
    }

    fn params(&self) -> Option<usize> {
        None
    }

    fn run_tile(&self, _: &HyperCube<f32>) -> Result<()> {
        Ok(())
    }
}

struct FailAt(usize, AtomicUsize);

impl Pipeline for FailAt {
    fn name(&self) -> String {
        "fail".into()
    }

    fn params(&self) -> Option<usize> {
        None
    }

    fn run_tile(&self, _: &HyperCube<f32>) -> Result<()> {
        let i = self.1.fetch_add(1, Ordering::Relaxed) % 10;
        if i == self.0 {
            bail!(Numeric, "boom");
        }
        Ok(())
    }
}

#[test]
fn sleeping_tiles_sum_to_expected_compute() {
    let r = time_pipeline(
        &SleepPipeline(Duration::from_millis(10)),
        &Blank(100),
        &BenchSettings::default(),
    )
    .unwrap();
    assert_eq!((r.tiles, r.repetitions, r.runs.len()), (100, 3, 3));
    assert!(
        r.compute_seconds >= 1.0 && r.compute_seconds < 1.5,
        "{}",
        r.compute_seconds
    );
    for run in &r.runs {
        let sum: f64 = run.tile_seconds.iter().sum();
        assert_eq!(sum, run.compute_seconds);
    }
    assert!(r.dispersion.min <= r.dispersion.median && r.dispersion.median <= r.dispersion.max);
    assert!(r.dispersion.max - r.dispersion.min < 0.3);
}

#[test]
fn io_is_reported_for_a_noop_pipeline() {
    let g = SyntheticGranule::new(
        (64, 64),
        32,
        vec![2200.0, 2300.0],
        0,
        SpectralSignature::synthetic_methane(),
    )
    .unwrap();
    let r = time_pipeline(&Noop, &g, &BenchSettings::default()).unwrap();
    assert_eq!(r.tiles, 4);
    assert!(r.io_seconds > 0.0);
    assert!(r.compute_seconds < r.io_seconds);
}

#[test]
fn failing_tile_is_named() {
    let err = time_pipeline(
        &FailAt(7, Default::default()),
        &Blank(10),
        &BenchSettings::default(),
    )
    .unwrap_err();
    assert!(err.to_string().contains("tile 7"), "{err}");
    assert_eq!(err.kind(), crate::error::ErrorKind::Numeric);
}

#[test]
fn too_few_repetitions_are_rejected() {
    let s = BenchSettings {
        repetitions: 2,
        threads: 1,
    };
    assert!(time_pipeline(&Noop, &Blank(1), &s).is_err());
    assert!(time_pipeline(&Noop, &Blank(0), &BenchSettings::default()).is_err());
}

#[test]
fn daily_projection_arithmetic() {
    assert!((daily_hours(203.3, EMIT_GRANULES_PER_DAY) - 16.941_666_666_666_667).abs() < 1e-12);
    assert_eq!(daily_hours(30.0, EMIT_GRANULES_PER_DAY), 2.5);
    assert_eq!(daily_hours(30.0, 0.0), 0.0);
    let r = time_pipeline(&Noop, &Blank(1), &BenchSettings::default()).unwrap();
    assert_eq!(daily_projection(&r, 0.0), 0.0);
    assert_eq!(
        daily_projection(&r, 300.0),
        300.0 * r.granule_seconds() / 3600.0
    );
}

#[test]
fn parameter_tallies() {
    let mut store = ParamStore::new();
    Conv::pointwise(
        &mut store,
        "fc",
        3,
        4,
        true,
        &mut ChaCha8Rng::seed_from_u64(0),
    );
    assert_eq!(store.trainable_count(), 16);
    assert_eq!(param_count(&store), 16e-6);
    let up = HyperSegFormer::new(ModelConfig::toy(86, Variant::ConvUp, true), 0).unwrap();
    let stride = HyperSegFormer::new(ModelConfig::toy(86, Variant::ConvUpStride, true), 0).unwrap();
    assert_eq!(param_count(up.store()), param_count(stride.store()));
    let b0 = HyperSegFormer::new(ModelConfig::b0(86, Variant::ConvUpStride, true), 0).unwrap();
    assert!(b0.param_count() > 5 * stride.param_count());
    let b0_base = HyperSegFormer::new(ModelConfig::b0(86, Variant::Base, false), 0).unwrap();
    // reference size of the 86-band base model, millions
    assert_eq!(
        (param_count(b0_base.store()) * 1000.0).round() / 1000.0,
        3.845
    );
}

#[test]
fn emit_like_granule_has_a_hundred_tiles() {
    assert_eq!(granule_band_centers().len(), 86);
    let g = SyntheticGranule::emit_like(0).unwrap();
    assert_eq!((g.len(), g.granule_shape()), (100, (1280, 1242)));
    let edge = g.load(9).unwrap();
    assert_eq!(edge.valid_count(), 128 * (1242 - 9 * 128));
    assert_eq!(g.load(9).unwrap().data()[..10], edge.data()[..10]);
}

#[test]
fn granule_tiles_cover_an_in_memory_cube() {
    let cube = HyperCube::constant(5, 7, vec![2300.0], &[1.0f32]).unwrap();
    let src = GranuleTiles::new(&cube, 4).unwrap();
    assert_eq!(src.len(), 4);
    let total: usize = (0..4).map(|i| src.load(i).unwrap().valid_count()).sum();
    assert_eq!(total, 35);
}
