use rand::Rng;

use super::ops::{BatchNormSpec, Conv2dSpec, BN_MOMENTUM};
use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

pub const LN_EPS: f32 = 1e-6;
pub const BN_EPS: f32 = 1e-5;

/// 2-D convolution with its parameters.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub spec: Conv2dSpec,
}

impl Conv {
    /// Normal init with standard deviation `1/sqrt(fan_in)`, zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        spec: Conv2dSpec,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let per_group = if spec.groups > 1 { 1 } else { c_in };
        let fan_in = (per_group * kernel * kernel) as f32;
        let w = Tensor::randn(
            &[c_out, per_group, kernel, kernel],
            fan_in.sqrt().recip(),
            rng,
        );
        let weight = store.add(format!("{name}.weight"), w, true);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[c_out]), true));
        Self { weight, bias, spec }
    }

    pub fn pointwise(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        Self::new(
            store,
            name,
            c_in,
            c_out,
            1,
            Conv2dSpec::new(1, 0),
            bias,
            rng,
        )
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = self.bias.map(|b| tape.param(store, b));
        tape.conv2d(x, w, b, self.spec)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, c: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.weight"), Tensor::full(&[c], 1.0), true),
            beta: store.add(format!("{name}.bias"), Tensor::zeros(&[c]), true),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gamma);
        let b = tape.param(store, self.beta);
        tape.layer_norm(x, g, b, LN_EPS)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub spec: BatchNormSpec,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, c: usize) -> Self {
        Self {
            spec: BatchNormSpec {
                gamma: store.add(format!("{name}.weight"), Tensor::full(&[c], 1.0), true),
                beta: store.add(format!("{name}.bias"), Tensor::zeros(&[c]), true),
                running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[c]), false),
                running_var: store.add(
                    format!("{name}.running_var"),
                    Tensor::full(&[c], 1.0),
                    false,
                ),
                eps: BN_EPS,
                momentum: BN_MOMENTUM,
            },
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, train: bool) -> Result<Var> {
        tape.batch_norm(x, store, &self.spec, train)
    }
}

/// 1×1 convolution C→C followed by GELU; spatial size and channel count
/// are preserved.
#[derive(Clone, Debug)]
pub struct SpectralBlock {
    pub conv: Conv,
}

impl SpectralBlock {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv: Conv::pointwise(store, &format!("{name}.conv"), c, c, true, rng),
        }
    }

    /// Output before the activation.
    pub fn pre_activation(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        self.conv.forward(tape, store, x)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.pre_activation(tape, store, x)?;
        Ok(tape.gelu(y))
    }
}

/// Multi-head self-attention whose keys and values come from a grid
/// downsampled by `sr_ratio` (strided convolution plus layer norm).
#[derive(Clone, Debug)]
pub struct EfficientSelfAttention {
    pub q: Conv,
    pub k: Conv,
    pub v: Conv,
    pub reduce: Option<(Conv, LayerNorm)>,
    pub proj: Conv,
    pub heads: usize,
}

impl EfficientSelfAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c: usize,
        heads: usize,
        sr_ratio: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let reduce = (sr_ratio > 1).then(|| {
            (
                Conv::new(
                    store,
                    &format!("{name}.sr"),
                    c,
                    c,
                    sr_ratio,
                    Conv2dSpec::new(sr_ratio, 0),
                    true,
                    rng,
                ),
                LayerNorm::new(store, &format!("{name}.sr_norm"), c),
            )
        });
        Self {
            q: Conv::pointwise(store, &format!("{name}.q"), c, c, true, rng),
            k: Conv::pointwise(store, &format!("{name}.k"), c, c, true, rng),
            v: Conv::pointwise(store, &format!("{name}.v"), c, c, true, rng),
            reduce,
            proj: Conv::pointwise(store, &format!("{name}.proj"), c, c, true, rng),
            heads,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let q = self.q.forward(tape, store, x)?;
        let src = match &self.reduce {
            Some((conv, norm)) => {
                let r = conv.forward(tape, store, x)?;
                norm.forward(tape, store, r)?
            }
            None => x,
        };
        let k = self.k.forward(tape, store, src)?;
        let v = self.v.forward(tape, store, src)?;
        let a = tape.attention(q, k, v, self.heads)?;
        self.proj.forward(tape, store, a)
    }
}

/// Pointwise expand, 3×3 depthwise convolution, GELU, pointwise project.
#[derive(Clone, Debug)]
pub struct MixFfn {
    pub fc1: Conv,
    pub dw: Conv,
    pub fc2: Conv,
}

impl MixFfn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            fc1: Conv::pointwise(store, &format!("{name}.fc1"), c, hidden, true, rng),
            dw: Conv::new(
                store,
                &format!("{name}.dw"),
                hidden,
                hidden,
                3,
                Conv2dSpec::depthwise(1, 1, hidden),
                true,
                rng,
            ),
            fc2: Conv::pointwise(store, &format!("{name}.fc2"), hidden, c, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, x)?;
        let h = self.dw.forward(tape, store, h)?;
        let h = tape.gelu(h);
        self.fc2.forward(tape, store, h)
    }
}

/// Encoder block: attention, optional spectral layer, feed-forward, each
/// on a residual path.
#[derive(Clone, Debug)]
pub struct Block {
    pub norm1: LayerNorm,
    pub attn: EfficientSelfAttention,
    pub spectral: Option<SpectralBlock>,
    pub norm2: LayerNorm,
    pub ffn: MixFfn,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c: usize,
        heads: usize,
        sr_ratio: usize,
        mlp_ratio: usize,
        spectral: bool,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), c),
            attn: EfficientSelfAttention::new(
                store,
                &format!("{name}.attn"),
                c,
                heads,
                sr_ratio,
                rng,
            ),
            spectral: spectral
                .then(|| SpectralBlock::new(store, &format!("{name}.spectral"), c, rng)),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), c),
            ffn: MixFfn::new(store, &format!("{name}.ffn"), c, c * mlp_ratio, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.norm1.forward(tape, store, x)?;
        let h = self.attn.forward(tape, store, h)?;
        let mut x = tape.add(x, h)?;
        if let Some(s) = &self.spectral {
            let h = s.forward(tape, store, x)?;
            x = tape.add(x, h)?;
        }
        let h = self.norm2.forward(tape, store, x)?;
        let h = self.ffn.forward(tape, store, h)?;
        tape.add(x, h)
    }
}

/// Overlapping patch embedding: strided convolution, padding `kernel/2`,
/// then layer norm.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub conv: Conv,
    pub norm: LayerNorm,
}

impl PatchEmbed {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            conv: Conv::new(
                store,
                &format!("{name}.proj"),
                c_in,
                c_out,
                kernel,
                Conv2dSpec::new(stride, kernel / 2),
                true,
                rng,
            ),
            norm: LayerNorm::new(store, &format!("{name}.norm"), c_out),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.conv.forward(tape, store, x)?;
        self.norm.forward(tape, store, h)
    }
}

/// Bilinear ×2, then two rounds of 3×3 convolution, ReLU, batch norm.
#[derive(Clone, Debug)]
pub struct UpscaleBlock {
    pub conv1: Conv,
    pub bn1: BatchNorm,
    pub conv2: Conv,
    pub bn2: BatchNorm,
}

impl UpscaleBlock {
    pub fn new(store: &mut ParamStore, name: &str, c: usize, rng: &mut impl Rng) -> Self {
        Self {
            conv1: Conv::new(
                store,
                &format!("{name}.conv1"),
                c,
                c,
                3,
                Conv2dSpec::new(1, 1),
                true,
                rng,
            ),
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), c),
            conv2: Conv::new(
                store,
                &format!("{name}.conv2"),
                c,
                c,
                3,
                Conv2dSpec::new(1, 1),
                true,
                rng,
            ),
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), c),
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var, train: bool) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let mut h = tape.resize_bilinear(x, 2 * s[2], 2 * s[3])?;
        for (conv, bn) in [(&self.conv1, &self.bn1), (&self.conv2, &self.bn2)] {
            h = conv.forward(tape, store, h)?;
            h = tape.relu(h);
            h = bn.forward(tape, store, h, train)?;
        }
        Ok(h)
    }
}
