use hsk_core::datacube::{
    aggregate_minerals, uniform_axis, BinaryMask, ComponentLayer, ComponentMap, HyperCube,
};
use hsk_core::matchedfilter::{
    column_stats, dilate, erode, iterate_mf, matched_filter, opening, MorphKernel, DEFAULT_LAMBDA,
};
use hsk_core::simulate::{
    inject_plume, toy_dataset, ConcentrationMap, SpectralSignature, ToyDatasetConfig,
    ToySceneConfig,
};
use proptest::prelude::*;

const BANDS: usize = 4;

fn cube_strategy() -> impl Strategy<Value = HyperCube<f64>> {
    (3usize..7, 2usize..5).prop_flat_map(|(h, w)| {
        prop::collection::vec(0.5f64..1.5, h * w * BANDS).prop_map(move |data| {
            HyperCube::from_data(h, w, uniform_axis(2200.0, 30.0, BANDS), data).unwrap()
        })
    })
}

fn signature() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1e-5, BANDS)
}

fn mask_strategy() -> impl Strategy<Value = BinaryMask> {
    (1usize..10, 1usize..10).prop_flat_map(|(h, w)| {
        prop::collection::vec(any::<bool>(), h * w)
            .prop_map(move |d| BinaryMask::new(h, w, d).unwrap())
    })
}

fn kernel() -> impl Strategy<Value = MorphKernel> {
    prop_oneof![Just(MorphKernel::Cross3), Just(MorphKernel::Ones3)]
}

fn subset(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.data.iter().zip(&b.data).all(|(&x, &y)| !x || y)
}

fn not(m: &BinaryMask) -> BinaryMask {
    BinaryMask::new(m.height, m.width, m.data.iter().map(|v| !v).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scaling_the_target_scales_the_estimate(cube in cube_strategy(), s in signature(), c in 0.25f64..8.0) {
        let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
        let a = matched_filter(&cube, &column_stats(&cube, &s, DEFAULT_LAMBDA).unwrap()).unwrap();
        let b = matched_filter(&cube, &column_stats(&cube, &scaled, DEFAULT_LAMBDA).unwrap()).unwrap();
        for (x, y) in a.alpha().iter().zip(b.alpha()) {
            prop_assert!((x - c * y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {c} * {y}");
        }
    }

    #[test]
    fn column_mean_pixel_scores_zero(
        offsets in prop::collection::vec(prop::collection::vec(-16i32..16, BANDS), 2..6),
        s in signature(),
    ) {
        // symmetric pairs around a dyadic mean keep the sample mean exact
        let n = offsets.len();
        let rows = 2 * n + 1;
        let mut data = vec![0.0; rows * BANDS];
        for b in 0..BANDS {
            for (i, o) in offsets.iter().enumerate() {
                let d = f64::from(o[b]) / 64.0;
                data[b * rows + 2 * i] = 1.0 + d;
                data[b * rows + 2 * i + 1] = 1.0 - d;
            }
            data[b * rows + 2 * n] = 1.0;
        }
        let cube = HyperCube::from_data(rows, 1, uniform_axis(2200.0, 30.0, BANDS), data).unwrap();
        let a = matched_filter(&cube, &column_stats(&cube, &s, DEFAULT_LAMBDA).unwrap()).unwrap();
        prop_assert_eq!(a.get(2 * n, 0), 0.0);
    }

    #[test]
    fn one_iteration_is_the_plain_filter(cube in cube_strategy(), s in signature()) {
        let plain = matched_filter(&cube, &column_stats(&cube, &s, DEFAULT_LAMBDA).unwrap()).unwrap();
        prop_assert_eq!(iterate_mf(&cube, &s, 1, DEFAULT_LAMBDA).unwrap(), plain);
    }

    #[test]
    fn zero_concentration_leaves_the_cube_unchanged(cube in cube_strategy(), s in signature()) {
        let alpha = ConcentrationMap::zeros(cube.height(), cube.width());
        prop_assert_eq!(inject_plume(&cube, &alpha, &s).unwrap(), cube);
    }

    #[test]
    fn erosion_and_dilation_bracket_the_mask(m in mask_strategy(), k in kernel()) {
        let (e, d) = (erode(&m, k), dilate(&m, k));
        prop_assert!(subset(&e, &m));
        prop_assert!(subset(&m, &d));
        prop_assert!(subset(&opening(&m, k), &m));
        prop_assert_eq!(opening(&opening(&m, k), k), opening(&m, k));
    }

    #[test]
    fn erosion_is_dual_to_dilation_inside_the_border(m in mask_strategy(), k in kernel()) {
        let e = erode(&m, k);
        let d = not(&dilate(&not(&m), k));
        for r in 1..m.height.saturating_sub(1) {
            for c in 1..m.width.saturating_sub(1) {
                prop_assert_eq!(e.get(r, c), d.get(r, c));
            }
        }
    }

    #[test]
    fn mineral_aggregate_is_the_union_of_its_layers(
        layers in prop::collection::vec((prop::collection::vec(any::<bool>(), 36), 0u8..3), 1..6),
    ) {
        let names = [Some("kaolinite"), Some("calcite"), None];
        let components: Vec<ComponentLayer> = layers
            .iter()
            .enumerate()
            .map(|(i, (d, _))| ComponentLayer { id: format!("c{i}"), mask: BinaryMask::new(6, 6, d.clone()).unwrap() })
            .collect();
        let ids: Vec<String> = (0..layers.len()).map(|i| format!("c{i}")).collect();
        let map = ComponentMap::from_pairs(ids.iter().zip(&layers).map(|(id, (_, k))| (id.as_str(), names[*k as usize])));
        for class in ["kaolinite", "calcite"] {
            let members: Vec<usize> = (0..layers.len()).filter(|&i| names[layers[i].1 as usize] == Some(class)).collect();
            let got = aggregate_minerals(&components, &map, class);
            if members.is_empty() {
                prop_assert!(got.is_err());
                continue;
            }
            let got = got.unwrap();
            for p in 0..36 {
                prop_assert_eq!(got.data[p], members.iter().any(|&i| layers[i].0[p]));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn dataset_labels_are_the_plume_support(seed in any::<u64>(), fraction in 0.0f64..=1.0) {
        let cfg = ToyDatasetConfig {
            seed,
            train: 4,
            val: 1,
            test: 1,
            scene: ToySceneConfig { size: 16, ..ToySceneConfig::default() },
            library_size: 4,
            event_fraction: fraction,
            ..ToyDatasetConfig::default()
        };
        let data = toy_dataset::<f32>(&cfg, &SpectralSignature::synthetic_methane()).unwrap();
        for s in data.train.iter().chain(&data.val).chain(&data.test) {
            prop_assert_eq!(s.label.class_mask(0), s.alpha.support());
            prop_assert_eq!(s.label.has_positive(), s.alpha.positive_count() > 0);
        }
    }
}
