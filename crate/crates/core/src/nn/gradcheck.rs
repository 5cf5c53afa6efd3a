//! Central finite-difference checks of recorded gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{EfficientSelfAttention, SpectralBlock, UpscaleBlock};
use super::ops::{BatchNormSpec, Conv2dSpec, BN_MOMENTUM};
use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const FD_EPS: f32 = 1e-3;
pub const FD_TOL: f64 = 1e-2;
/// Entries probed per input; larger inputs are subsampled.
pub const MAX_PROBES: usize = 48;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub op: String,
    pub seed: u64,
    /// `‖fd − analytic‖ / max(‖fd‖, ‖analytic‖)` over probed entries.
    pub rel_error: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.rel_error <= FD_TOL
    }
}

/// Checks `∂(Σ r·f(inputs)) / ∂inputs` for a random projection `r`.
pub fn check<F>(op: &str, seed: u64, inputs: &[Tensor], f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let proj = Tensor::uniform(tape.shape(out), -1.0, 1.0, &mut rng);
    let grads = tape.backward(out, proj.clone())?;

    let objective = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let o = f(&mut t, &vs)?;
        Ok(t.value(o)
            .data()
            .iter()
            .zip(proj.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum())
    };

    let (mut diff2, mut fd2, mut an2) = (0.0f64, 0.0f64, 0.0f64);
    let mut xs = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        let n = inputs[i].len();
        let probes: Vec<usize> = if n <= MAX_PROBES {
            (0..n).collect()
        } else {
            (0..MAX_PROBES).map(|_| rng.random_range(0..n)).collect()
        };
        for p in probes {
            let orig = xs[i].data()[p];
            xs[i].data_mut()[p] = orig + FD_EPS;
            let up = objective(&xs)?;
            xs[i].data_mut()[p] = orig - FD_EPS;
            let down = objective(&xs)?;
            xs[i].data_mut()[p] = orig;
            let fd = (up - down) / (2.0 * FD_EPS as f64);
            let an = analytic.data()[p] as f64;
            diff2 += (fd - an).powi(2);
            fd2 += fd * fd;
            an2 += an * an;
        }
    }
    let scale = fd2.sqrt().max(an2.sqrt());
    let rel_error = if scale < 1e-9 {
        diff2.sqrt()
    } else {
        diff2.sqrt() / scale
    };
    Ok(GradCheck {
        op: op.to_string(),
        seed,
        rel_error,
    })
}

fn rand_dim(rng: &mut impl Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Values bounded away from zero so ReLU kinks stay outside ±ε.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05f32..1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape")
}

/// Runs every differentiable op and composite block once per seed on
/// randomized small shapes.
pub fn suite(seeds: &[u64]) -> Result<Vec<GradCheck>> {
    let mut out = Vec::new();
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rand_dim(&mut rng, 1, 2);
        let c = rand_dim(&mut rng, 2, 4);
        let h = rand_dim(&mut rng, 4, 7);
        let w = rand_dim(&mut rng, 4, 7);
        let o = rand_dim(&mut rng, 2, 4);
        let x = Tensor::randn(&[n, c, h, w], 1.0, &mut rng);

        for (name, k, stride, pad) in [
            ("conv2d_3x3", 3, 1, 1),
            ("conv2d_strided", 3, 2, 1),
            ("conv2d_7x7_s2", 7, 2, 3),
        ] {
            let wt = Tensor::randn(&[o, c, k, k], 0.3, &mut rng);
            let b = Tensor::randn(&[o], 0.3, &mut rng);
            out.push(check(name, seed, &[x.clone(), wt, b], |t, v| {
                t.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::new(stride, pad))
            })?);
        }
        let wt = Tensor::randn(&[o, c, 1, 1], 0.5, &mut rng);
        let b = Tensor::randn(&[o], 0.3, &mut rng);
        out.push(check("conv2d_1x1", seed, &[x.clone(), wt, b], |t, v| {
            t.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::new(1, 0))
        })?);
        let wt = Tensor::randn(&[c, 1, 3, 3], 0.5, &mut rng);
        let b = Tensor::randn(&[c], 0.3, &mut rng);
        out.push(check(
            "depthwise_conv2d",
            seed,
            &[x.clone(), wt, b],
            |t, v| t.conv2d(v[0], v[1], Some(v[2]), Conv2dSpec::depthwise(1, 1, c)),
        )?);

        let g = Tensor::uniform(&[c], 0.5, 1.5, &mut rng);
        let be = Tensor::randn(&[c], 0.3, &mut rng);
        out.push(check(
            "layer_norm",
            seed,
            &[x.clone(), g.clone(), be.clone()],
            |t, v| t.layer_norm(v[0], v[1], v[2], 1e-6),
        )?);
        for train in [true, false] {
            let mut store = ParamStore::new();
            let spec = BatchNormSpec {
                gamma: store.add("g", g.clone(), true),
                beta: store.add("b", be.clone(), true),
                running_mean: store.add("m", Tensor::randn(&[c], 0.2, &mut rng), false),
                running_var: store.add("v", Tensor::uniform(&[c], 0.5, 1.5, &mut rng), false),
                eps: 1e-5,
                momentum: BN_MOMENTUM,
            };
            let name = if train {
                "batch_norm_train"
            } else {
                "batch_norm_eval"
            };
            out.push(check(name, seed, std::slice::from_ref(&x), |t, v| {
                t.batch_norm(v[0], &store, &spec, train)
            })?);
        }

        out.push(check("gelu", seed, std::slice::from_ref(&x), |t, v| {
            Ok(t.gelu(v[0]))
        })?);
        out.push(check(
            "relu",
            seed,
            &[away_from_zero(&[n, c, h, w], &mut rng)],
            |t, v| Ok(t.relu(v[0])),
        )?);
        out.push(check("sigmoid", seed, std::slice::from_ref(&x), |t, v| {
            Ok(t.sigmoid(v[0]))
        })?);
        let y = Tensor::randn(&[n, c, h, w], 1.0, &mut rng);
        out.push(check("add", seed, &[x.clone(), y.clone()], |t, v| {
            t.add(v[0], v[1])
        })?);
        out.push(check("concat", seed, &[x.clone(), y], |t, v| {
            t.concat(&[v[0], v[1]])
        })?);
        out.push(check("sum", seed, std::slice::from_ref(&x), |t, v| {
            Ok(t.sum(v[0]))
        })?);
        let (uh, uw) = (
            rand_dim(&mut rng, h + 1, 2 * h + 3),
            rand_dim(&mut rng, w + 1, 2 * w + 3),
        );
        out.push(check(
            "resize_up",
            seed,
            std::slice::from_ref(&x),
            |t, v| t.resize_bilinear(v[0], uh, uw),
        )?);
        out.push(check(
            "resize_down",
            seed,
            std::slice::from_ref(&x),
            |t, v| t.resize_bilinear(v[0], 2, 3),
        )?);

        let heads = rand_dim(&mut rng, 1, 2);
        let ch = 4 * heads;
        let q = Tensor::randn(&[n, ch, h, w], 1.0, &mut rng);
        let k = Tensor::randn(&[n, ch, 2, 3], 1.0, &mut rng);
        let vv = Tensor::randn(&[n, ch, 2, 3], 1.0, &mut rng);
        out.push(check("attention", seed, &[q, k, vv], |t, v| {
            t.attention(v[0], v[1], v[2], heads)
        })?);

        let k = rand_dim(&mut rng, 1, 3);
        let logits = Tensor::randn(&[n, k, h, w], 2.0, &mut rng);
        let targets = Tensor::new(
            &[n, k, h, w],
            (0..n * k * h * w)
                .map(|_| rng.random_range(0..2) as f32)
                .collect(),
        )?;
        let weights = Tensor::new(
            &[n, 1, h, w],
            (0..n * h * w)
                .map(|i| {
                    if i % 5 == 0 {
                        0.0
                    } else {
                        rng.random_range(0.5f32..2.0)
                    }
                })
                .collect(),
        )?;
        out.push(check("bce_with_logits", seed, &[logits], |t, v| {
            t.bce_with_logits(v[0], &targets, &weights)
        })?);

        // composite blocks, differentiated with respect to their input
        let mut store = ParamStore::new();
        let spectral = SpectralBlock::new(&mut store, "s", c, &mut rng);
        out.push(check(
            "spectral_block",
            seed,
            std::slice::from_ref(&x),
            |t, v| spectral.forward(t, &store, v[0]),
        )?);
        let mut store = ParamStore::new();
        let attn = EfficientSelfAttention::new(&mut store, "a", 8, 2, 2, &mut rng);
        let xa = Tensor::randn(&[1, 8, 4, 4], 1.0, &mut rng);
        out.push(check("efficient_self_attention", seed, &[xa], |t, v| {
            attn.forward(t, &store, v[0])
        })?);
        let mut store = ParamStore::new();
        let up = UpscaleBlock::new(&mut store, "u", c, &mut rng);
        // conv outputs feeding ReLU stay clear of zero for almost all draws
        out.push(check(
            "upscale_block",
            seed,
            std::slice::from_ref(&x),
            |t, v| up.forward(t, &store, v[0], false),
        )?);
    }
    Ok(out)
}
