use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::sigmoid;
use super::*;
use crate::datacube::{tile_grid, BinaryMask, HyperCube, LabelMask};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn gradient_suite_passes_for_five_seeds() {
    let results = gradcheck::suite(&[0, 1, 2, 3, 4]).unwrap();
    let failed: Vec<_> = results.iter().filter(|r| !r.passed()).collect();
    assert!(failed.is_empty(), "{failed:#?}");
    assert!(results.len() >= 5 * 20);
}

#[test]
fn gradcheck_detects_a_wrong_gradient() {
    // relu's gradient applied to gelu's forward is wrong almost everywhere
    let x = Tensor::randn(&[1, 2, 3, 3], 1.0, &mut rng(0));
    let r = gradcheck::check("bogus", 0, &[x], |t, v| {
        let y = t.gelu(v[0]);
        let s = t.value(y).clone();
        Ok(t.push("bogus", s, &[v[0]], |_, _, g| vec![Some(g.clone())]))
    })
    .unwrap();
    assert!(!r.passed());
}

#[test]
fn conv_with_ones_sums_its_window() {
    let mut t = Tape::new();
    let data: Vec<f32> = (1..=9).map(|v| v as f32).collect();
    let x = t.constant(Tensor::new(&[1, 1, 3, 3], data).unwrap());
    let w = t.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
    let y = t.conv2d(x, w, None, Conv2dSpec::new(1, 0)).unwrap();
    assert_eq!(t.value(y).shape(), &[1, 1, 1, 1]);
    assert_eq!(t.value(y).data()[0], 45.0);
}

#[test]
fn identity_pointwise_conv_is_identity() {
    let mut t = Tape::new();
    let xt = Tensor::randn(&[2, 3, 5, 4], 1.0, &mut rng(1));
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let x = t.constant(xt.clone());
    let w = t.constant(Tensor::new(&[3, 3, 1, 1], eye).unwrap());
    let y = t.conv2d(x, w, None, Conv2dSpec::new(1, 0)).unwrap();
    assert_eq!(t.value(y), &xt);
}

#[test]
fn conv_output_size_formula() {
    assert_eq!(conv_out(64, 7, 4, 3).unwrap(), 16);
    assert_eq!(conv_out(64, 7, 2, 3).unwrap(), 32);
    assert_eq!(conv_out(16, 3, 2, 1).unwrap(), 8);
    assert_eq!(conv_out(5, 1, 1, 0).unwrap(), 5);
    assert!(conv_out(2, 5, 1, 0).is_err());
    let mut t = Tape::new();
    let x = t.constant(Tensor::zeros(&[1, 1, 2, 2]));
    let w = t.constant(Tensor::zeros(&[1, 1, 3, 3]));
    assert!(t.conv2d(x, w, None, Conv2dSpec::new(1, 0)).is_err());
    let w = t.constant(Tensor::zeros(&[1, 2, 1, 1]));
    assert!(t.conv2d(x, w, None, Conv2dSpec::new(1, 0)).is_err());
}

#[test]
fn spectral_block_identity_and_shape() {
    for c in [1, 3, 8] {
        let mut store = ParamStore::new();
        let block = SpectralBlock::new(&mut store, "s", c, &mut rng(2));
        let mut eye = vec![0.0; c * c];
        for i in 0..c {
            eye[i * c + i] = 1.0;
        }
        *store.get_mut(block.conv.weight) = Tensor::new(&[c, c, 1, 1], eye).unwrap();
        let xt = Tensor::randn(&[2, c, 6, 5], 1.0, &mut rng(3));
        let mut t = Tape::new();
        let x = t.constant(xt.clone());
        let pre = block.pre_activation(&mut t, &store, x).unwrap();
        assert_eq!(t.value(pre), &xt);
        let y = block.forward(&mut t, &store, x).unwrap();
        assert_eq!(t.shape(y), &[2, c, 6, 5]);
    }
}

#[test]
fn spectral_block_is_position_equivariant() {
    let (c, h, w) = (4, 5, 6);
    let mut store = ParamStore::new();
    let block = SpectralBlock::new(&mut store, "s", c, &mut rng(4));
    let xt = Tensor::randn(&[1, c, h, w], 1.0, &mut rng(5));
    let mut perm: Vec<usize> = (0..h * w).collect();
    let mut r = rng(6);
    for i in (1..perm.len()).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    let permute = |t: &Tensor| {
        let mut d = vec![0.0; t.len()];
        for ch in 0..c {
            for (dst, &src) in perm.iter().enumerate() {
                d[ch * h * w + dst] = t.data()[ch * h * w + src];
            }
        }
        Tensor::new(t.shape(), d).unwrap()
    };
    let run = |x: Tensor| {
        let mut t = Tape::new();
        let v = t.constant(x);
        let y = block.forward(&mut t, &store, v).unwrap();
        t.value(y).clone()
    };
    assert_eq!(run(permute(&xt)), permute(&run(xt)));
}

#[test]
fn patch_embed_strides() {
    let mut store = ParamStore::new();
    let mut r = rng(7);
    let x = Tensor::randn(&[1, 3, 64, 64], 1.0, &mut r);
    for (k, s, want) in [(7, 4, 16), (7, 2, 32), (1, 1, 64)] {
        let pe = PatchEmbed::new(&mut store, &format!("pe{k}{s}"), 3, 8, k, s, &mut r);
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let y = pe.forward(&mut t, &store, v).unwrap();
        assert_eq!(t.shape(y), &[1, 8, want, want]);
    }
}

#[test]
fn single_token_attention_returns_values() {
    let mut r = rng(8);
    let q = Tensor::randn(&[1, 4, 3, 3], 1.0, &mut r);
    let k = Tensor::randn(&[1, 4, 1, 1], 1.0, &mut r);
    let v = Tensor::randn(&[1, 4, 1, 1], 1.0, &mut r);
    let mut t = Tape::new();
    let (qv, kv, vv) = (t.constant(q), t.constant(k), t.constant(v.clone()));
    let y = t.attention(qv, kv, vv, 2).unwrap();
    for ch in 0..4 {
        for p in 0..9 {
            assert_eq!(t.value(y).data()[ch * 9 + p], v.data()[ch]);
        }
    }

    // module on a 1x1 grid: output is the projected value of the input
    let mut store = ParamStore::new();
    let attn = EfficientSelfAttention::new(&mut store, "a", 4, 2, 1, &mut r);
    let x = Tensor::randn(&[1, 4, 1, 1], 1.0, &mut r);
    let mut t = Tape::new();
    let xv = t.constant(x);
    let y = attn.forward(&mut t, &store, xv).unwrap();
    let vx = attn.v.forward(&mut t, &store, xv).unwrap();
    let want = attn.proj.forward(&mut t, &store, vx).unwrap();
    assert_eq!(t.value(y), t.value(want));
}

#[test]
fn attention_rows_are_distributions() {
    let mut r = rng(9);
    let q = Tensor::randn(&[2, 8, 4, 4], 3.0, &mut r);
    let k = Tensor::randn(&[2, 8, 2, 2], 3.0, &mut r);
    for probs in attention_probs(&q, &k, 4).unwrap() {
        for row in probs.chunks(4) {
            let s: f32 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "{s}");
        }
    }
    assert!(attention_probs(&q, &k, 3).is_err());
}

fn forward_shape(model: &HyperSegFormer, size: usize) -> Vec<usize> {
    let mut t = Tape::inference();
    let x = t.constant(Tensor::zeros(&[1, model.config().in_bands, size, size]));
    let y = model.forward(&mut t, x, false).unwrap();
    t.shape(y).to_vec()
}

#[test]
fn resolution_contract_and_parameter_counts() {
    let mk = |v| HyperSegFormer::new(ModelConfig::toy(8, v, true), 0).unwrap();
    let (base, up, stride) = (
        mk(Variant::Base),
        mk(Variant::ConvUp),
        mk(Variant::ConvUpStride),
    );
    assert_eq!(forward_shape(&base, 64), vec![1, 1, 16, 16]);
    assert_eq!(forward_shape(&up, 64), vec![1, 1, 32, 32]);
    assert_eq!(forward_shape(&stride, 64), vec![1, 1, 64, 64]);
    assert_eq!(up.param_count(), stride.param_count());
    assert!(base.param_count() < up.param_count());
    for m in [&base, &up, &stride] {
        let mut t = Tape::inference();
        let x = t.constant(Tensor::zeros(&[1, 8, 64, 64]));
        let y = m.forward_full(&mut t, x, false).unwrap();
        assert_eq!(t.shape(y), &[1, 1, 64, 64]);
    }
}

#[test]
fn spectral_layers_add_c_squared_plus_c_per_block() {
    let with = ModelConfig {
        stage_depths: vec![2, 1, 1, 1],
        ..ModelConfig::toy(8, Variant::Base, true)
    };
    let without = ModelConfig {
        spectral_layer: false,
        ..with.clone()
    };
    let a = HyperSegFormer::new(with.clone(), 0).unwrap().param_count();
    let b = HyperSegFormer::new(without, 0).unwrap().param_count();
    let extra: usize = with
        .stage_dims
        .iter()
        .zip(&with.stage_depths)
        .map(|(&c, &d)| d * (c * c + c))
        .sum();
    assert_eq!(a - b, extra);
}

#[test]
fn forward_is_deterministic() {
    let cfg = ModelConfig::toy(8, Variant::ConvUpStride, true);
    let x = Tensor::randn(&[2, 8, 32, 32], 1.0, &mut rng(10));
    let run = || {
        let m = HyperSegFormer::new(cfg.clone(), 3).unwrap();
        let mut t = Tape::inference();
        let v = t.constant(x.clone());
        let y = m.forward(&mut t, v, false).unwrap();
        t.value(y).clone()
    };
    assert_eq!(run(), run());
}

#[test]
fn zero_features_give_classifier_bias() {
    for variant in [Variant::Base, Variant::ConvUp, Variant::ConvUpStride] {
        let mut m = HyperSegFormer::new(ModelConfig::toy(8, variant, false), 0).unwrap();
        let bias = m.store().find("decoder.classifier.bias").unwrap();
        *m.store_mut().get_mut(bias) = Tensor::full(&[1], 0.7);
        let mut t = Tape::inference();
        let feats: Vec<Var> = m
            .config()
            .stage_dims
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let s = 16 >> i;
                t.constant(Tensor::zeros(&[1, c, s, s]))
            })
            .collect();
        let y = m.decode(&mut t, &feats, false).unwrap();
        assert_eq!(t.shape(y)[1], 1);
        assert!(t.value(y).data().iter().all(|&v| (v - 0.7).abs() < 1e-6));
    }
}

#[test]
fn prior_probability_sets_classifier_bias() {
    let cfg = ModelConfig {
        prior_probability: Some(0.01),
        ..ModelConfig::toy(8, Variant::Base, false)
    };
    let m = HyperSegFormer::new(cfg.clone(), 0).unwrap();
    let b = m
        .store()
        .get(m.store().find("decoder.classifier.bias").unwrap())
        .data()[0];
    assert!((sigmoid(b) - 0.01).abs() < 1e-6);
    assert!(HyperSegFormer::new(
        ModelConfig {
            prior_probability: Some(1.0),
            ..cfg
        },
        0
    )
    .is_err());
    let plain = HyperSegFormer::new(ModelConfig::toy(8, Variant::Base, false), 0).unwrap();
    assert_eq!(
        plain
            .store()
            .get(plain.store().find("decoder.classifier.bias").unwrap())
            .data(),
        &[0.0]
    );
}

#[test]
fn upscale_block_doubles_resolution() {
    let mut store = ParamStore::new();
    let up = UpscaleBlock::new(&mut store, "u", 6, &mut rng(11));
    let mut t = Tape::new();
    let x = t.constant(Tensor::randn(&[2, 6, 32, 32], 1.0, &mut rng(12)));
    let y = up.forward(&mut t, &store, x, true).unwrap();
    assert_eq!(t.shape(y), &[2, 6, 64, 64]);
}

#[test]
fn bottleneck_percentages() {
    let r = bottleneck_ratio(86, 64, 4);
    assert!((-95.4..=-95.3).contains(&r), "{r}");
    let r = bottleneck_ratio(3, 64, 4);
    assert!((33.0..=33.5).contains(&r), "{r}");
    assert_eq!(bottleneck_ratio(7, 7, 1), 0.0);
}

fn bce_value(logits: &[f32], targets: &[f32], weights: &[f32], shape: [usize; 4]) -> f32 {
    let mut t = Tape::new();
    let z = t.constant(Tensor::new(&shape, logits.to_vec()).unwrap());
    let tg = Tensor::new(&shape, targets.to_vec()).unwrap();
    let w = Tensor::new(&[shape[0], 1, shape[2], shape[3]], weights.to_vec()).unwrap();
    let l = t.bce_with_logits(z, &tg, &w).unwrap();
    t.value(l).data()[0]
}

#[test]
fn bce_limits_and_hand_case() {
    let big = bce_value(
        &[40.0, -40.0, 40.0, -40.0],
        &[1.0, 0.0, 1.0, 0.0],
        &[1.0; 4],
        [1, 1, 2, 2],
    );
    assert!(big < 1e-12);
    let zero = bce_value(&[0.0; 4], &[1.0, 0.0, 0.0, 1.0], &[1.0; 4], [1, 1, 2, 2]);
    assert!((zero - std::f32::consts::LN_2).abs() < 1e-6);

    // brute force: −[y ln σ(z) + (1−y) ln(1−σ(z))], weighted, mean over valid pixels
    let z = [1.5f64, -0.5, 2.0, 0.25];
    let y = [1.0f64, 1.0, 0.0, 0.0];
    let w = [1.0f64, 2.0, 0.0, 0.5];
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let terms: f64 = (0..4)
        .filter(|&i| w[i] > 0.0)
        .map(|i| -w[i] * (y[i] * sig(z[i]).ln() + (1.0 - y[i]) * (1.0 - sig(z[i])).ln()))
        .sum();
    let want = terms / 3.0;
    let got = bce_value(
        &z.map(|v| v as f32),
        &y.map(|v| v as f32),
        &w.map(|v| v as f32),
        [1, 1, 2, 2],
    );
    assert!((got as f64 - want).abs() < 1e-6, "{got} vs {want}");

    let mut t = Tape::new();
    let zv = t.constant(Tensor::zeros(&[1, 1, 2, 2]));
    assert!(t
        .bce_with_logits(
            zv,
            &Tensor::zeros(&[1, 1, 2, 2]),
            &Tensor::zeros(&[1, 1, 2, 2])
        )
        .is_err());
}

#[test]
fn multi_hot_bce_averages_classes() {
    // class 0 at logit 0 (ln 2 each), class 1 perfectly confident
    let z = [0.0, 0.0, 50.0, -50.0];
    let y = [1.0, 0.0, 1.0, 0.0];
    let v = bce_value(&z, &y, &[1.0, 1.0], [1, 2, 1, 2]);
    assert!((v - std::f32::consts::LN_2 / 2.0).abs() < 1e-6);
}

#[test]
fn adam_zero_gradient_and_first_step() {
    let mut store = ParamStore::new();
    let id = store.add("p", Tensor::new(&[2], vec![1.0, -2.0]).unwrap(), true);
    let mut state = AdamState::new(&store);
    let cfg = AdamConfig::new(0.1);
    adam_step(&mut store, &[(id, Tensor::zeros(&[2]))], &mut state, &cfg);
    assert_eq!(store.get(id).data(), &[1.0, -2.0]);

    let mut store = ParamStore::new();
    let id = store.add("p", Tensor::new(&[1], vec![1.0]).unwrap(), true);
    let mut state = AdamState::new(&store);
    let g = 0.3f64;
    adam_step(
        &mut store,
        &[(id, Tensor::new(&[1], vec![g as f32]).unwrap())],
        &mut state,
        &cfg,
    );
    // m̂ = g, v̂ = g², update = lr·g/(|g| + ε)
    let m_hat = (0.1 * g) / (1.0 - 0.9);
    let v_hat = (0.001 * g * g) / (1.0 - 0.999);
    let want = 1.0 - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
    assert!((store.get(id).data()[0] as f64 - want).abs() < 1e-6);
}

#[test]
fn adam_is_reproducible() {
    let run = || {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::randn(&[5], 1.0, &mut rng(13)), true);
        let mut state = AdamState::new(&store);
        let g = Tensor::randn(&[5], 1.0, &mut rng(14));
        for _ in 0..2 {
            adam_step(
                &mut store,
                &[(id, g.clone())],
                &mut state,
                &AdamConfig::new(0.01),
            );
        }
        store
    };
    assert_eq!(run(), run());
}

fn label(pos: bool) -> LabelMask {
    let mut m = BinaryMask::zeros(2, 2);
    m.set(0, 0, pos);
    LabelMask::binary(&m)
}

#[test]
fn sampler_balances_positive_tiles() {
    let labels: Vec<LabelMask> = (0..100).map(|i| label(i % 10 == 0)).collect();
    let draws = weighted_sampler(&labels, 100_000, 1).unwrap();
    let frac = draws.iter().filter(|&&i| i % 10 == 0).count() as f64 / draws.len() as f64;
    assert!((frac - 0.5).abs() < 0.01, "{frac}");
    assert_eq!(draws, weighted_sampler(&labels, 100_000, 1).unwrap());
}

#[test]
fn sampler_without_positives_is_uniform() {
    let labels: Vec<LabelMask> = (0..4).map(|_| label(false)).collect();
    assert_eq!(sampler_weights(&[false; 4]), vec![1.0; 4]);
    let draws = weighted_sampler(&labels, 40_000, 2).unwrap();
    for k in 0..4 {
        let f = draws.iter().filter(|&&i| i == k).count() as f64 / 40_000.0;
        assert!((f - 0.25).abs() < 0.01);
    }
}

fn toy_samples(n: usize, size: usize, bands: usize, seed: u64) -> Vec<TrainSample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let mut data = Vec::with_capacity(bands * size * size);
            let mut mask = BinaryMask::zeros(size, size);
            let positive = i % 2 == 0;
            for b in 0..bands {
                for p in 0..size * size {
                    let plume = positive && (p / size) < size / 2 && (p % size) < size / 2;
                    let dip = if plume && b % 2 == 0 { 0.7 } else { 1.0 };
                    data.push((1.0 + 0.05 * r.random::<f32>()) * dip);
                }
            }
            for p in 0..size * size {
                if positive && (p / size) < size / 2 && (p % size) < size / 2 {
                    mask.data[p] = true;
                }
            }
            let centers = (0..bands).map(|b| 2000.0 + 10.0 * b as f64).collect();
            TrainSample {
                cube: HyperCube::from_data(size, size, centers, data).unwrap(),
                label: LabelMask::binary(&mask),
                pixel_weights: None,
            }
        })
        .collect()
}

fn tiny_config() -> ModelConfig {
    ModelConfig {
        stage_dims: vec![8, 16],
        stage_depths: vec![1, 1],
        heads: vec![1, 2],
        sr_ratios: vec![2, 1],
        decoder_dim: 8,
        ..ModelConfig::toy(4, Variant::ConvUpStride, true)
    }
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let data = toy_samples(6, 16, 4, 0);
    let mut m = HyperSegFormer::new(tiny_config(), 1).unwrap();
    let before = m.store().clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        batch_size: 3,
        epochs: 2,
        ..TrainConfig::default()
    };
    train(&mut m, &data, &data[..2], &cfg, &TrainOptions::default()).unwrap();
    for id in before.trainable_ids() {
        assert_eq!(before.get(id), m.store().get(id));
    }
}

#[test]
fn training_loss_decreases_and_best_epoch_is_selected() {
    let data = toy_samples(16, 16, 4, 1);
    let mut m = HyperSegFormer::new(tiny_config(), 2).unwrap();
    let cfg = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 4,
        epochs: 5,
        ..TrainConfig::default()
    };
    let out = train(
        &mut m,
        &data[..12],
        &data[12..],
        &cfg,
        &TrainOptions::default(),
    )
    .unwrap();
    let losses: Vec<f64> = out.history.iter().map(|e| e.train_loss).collect();
    assert!(losses[4] < losses[0], "{losses:?}");
    let best = out
        .history
        .iter()
        .min_by(|a, b| a.val_loss.partial_cmp(&b.val_loss).unwrap())
        .unwrap();
    assert_eq!(out.best_epoch, Some(best.epoch));
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let data = toy_samples(8, 16, 4, 3);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        batch_size: 4,
        epochs: 4,
        seed: 9,
        ..TrainConfig::default()
    };
    let full = tempfile::tempdir().unwrap();
    let mut a = HyperSegFormer::new(tiny_config(), 5).unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(full.path().to_path_buf()),
        ..TrainOptions::default()
    };
    train(&mut a, &data[..6], &data[6..], &cfg, &opts).unwrap();

    let split = tempfile::tempdir().unwrap();
    let mut b = HyperSegFormer::new(tiny_config(), 5).unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(split.path().to_path_buf()),
        resume: false,
        stop_after: Some(2),
    };
    let partial = train(&mut b, &data[..6], &data[6..], &cfg, &opts).unwrap();
    assert!(!partial.completed);
    let mut c = HyperSegFormer::new(tiny_config(), 5).unwrap();
    let opts = TrainOptions {
        checkpoint_dir: Some(split.path().to_path_buf()),
        resume: true,
        stop_after: None,
    };
    let out = train(&mut c, &data[..6], &data[6..], &cfg, &opts).unwrap();
    assert!(out.completed);
    for name in [LAST_CHECKPOINT, BEST_CHECKPOINT] {
        let x = std::fs::read(full.path().join(name)).unwrap();
        let y = std::fs::read(split.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    assert_eq!(a.store(), c.store());
}

#[test]
fn checkpoint_round_trip() {
    let m = HyperSegFormer::new(tiny_config(), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.ckpt");
    save_model(&m, &p).unwrap();
    let back = load_model(&p).unwrap();
    assert_eq!(back.store(), m.store());
    assert_eq!(back.config(), m.config());
    let mut bytes = std::fs::read(&p).unwrap();
    bytes[0] = b'X';
    assert!(Checkpoint::from_bytes(&bytes).is_err());
    let header_len =
        u64::from_le_bytes(std::fs::read(&p).unwrap()[8..16].try_into().unwrap()) as usize;
    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&p).unwrap()[16..16 + header_len]).unwrap();
    assert!(json["tensors"][0]["offset"].is_u64());
}

#[test]
fn zero_classifier_infers_one_half_everywhere() {
    let mut m = HyperSegFormer::new(tiny_config(), 8).unwrap();
    let w = m.store().find("decoder.classifier.weight").unwrap();
    let shape = m.store().get(w).shape().to_vec();
    *m.store_mut().get_mut(w) = Tensor::zeros(&shape);
    let cube = toy_samples(1, 40, 4, 4).remove(0).cube;
    let grid = tile_grid(40, 40, 16, 4, true).unwrap();
    let p = infer(&m, &cube, &grid, 4).unwrap();
    assert_eq!((p.height, p.width, p.channels), (40, 40, 1));
    assert!(p.data.iter().all(|&v| v == 0.5));
}

#[test]
fn inference_extent_matches_cube_for_every_variant() {
    let cube = toy_samples(1, 37, 4, 5).remove(0).cube;
    for variant in [Variant::Base, Variant::ConvUp, Variant::ConvUpStride] {
        let m = HyperSegFormer::new(
            ModelConfig {
                variant,
                ..tiny_config()
            },
            0,
        )
        .unwrap();
        for pad in [true, false] {
            let grid = tile_grid(37, 37, 16, 4, pad).unwrap();
            let p = infer(&m, &cube, &grid, 3).unwrap();
            assert_eq!((p.height, p.width), (37, 37));
        }
    }
}

#[test]
fn tile_order_does_not_change_stitched_output() {
    let m = HyperSegFormer::new(tiny_config(), 9).unwrap();
    let cube = toy_samples(1, 40, 4, 6).remove(0).cube;
    let grid = tile_grid(40, 40, 16, 4, true).unwrap();
    let tiles = crate::datacube::extract_tiles(&cube, &grid, cube.nodata_value()).unwrap();
    let logits = tile_logits(&m, &tiles, 4).unwrap();
    let forward = crate::datacube::stitch(&logits, &grid).unwrap();
    let mut rev_grid = grid.clone();
    rev_grid.origins.reverse();
    let rev_logits: Vec<_> = logits.into_iter().rev().collect();
    let backward = crate::datacube::stitch(&rev_logits, &rev_grid).unwrap();
    for (a, b) in forward.data.iter().zip(&backward.data) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
    }
}

#[test]
fn non_finite_values_are_reported() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor::new(&[1, 1, 1, 2], vec![f32::NAN, 1.0]).unwrap());
    let y = t.gelu(x);
    assert!(t.check_finite().is_err());
    assert!(t.backward(y, Tensor::full(&[1, 1, 1, 2], 1.0)).is_err());
}
