use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Block, Conv, LayerNorm, PatchEmbed, UpscaleBlock};
use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::datacube::HyperCube;
use crate::error::{bail, Error, Result};

/// Resolution variant of the segmenter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Stage-1 stride 4, logits at ¼ resolution.
    Base,
    /// Stage-1 stride 4 plus one upscale block, logits at ½ resolution.
    ConvUp,
    /// Stage-1 stride 2 plus one upscale block, logits at full resolution.
    ConvUpStride,
}

impl Variant {
    pub fn first_stride(self) -> usize {
        match self {
            Variant::ConvUpStride => 2,
            _ => 4,
        }
    }

    pub fn upscale(self) -> bool {
        self != Variant::Base
    }

    /// Logit resolution as a divisor of the input resolution.
    pub fn output_divisor(self) -> usize {
        if self.upscale() {
            self.first_stride() / 2
        } else {
            self.first_stride()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::ConvUp => "convup",
            Variant::ConvUpStride => "convupstride",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "base" => Ok(Variant::Base),
            "convup" => Ok(Variant::ConvUp),
            "convupstride" => Ok(Variant::ConvUpStride),
            _ => Err(Error::InvalidArgument(format!(
                "unknown variant `{s}` (expected base, convup or convupstride)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_bands: usize,
    pub num_classes: usize,
    pub multi_hot: bool,
    pub variant: Variant,
    pub stage_dims: Vec<usize>,
    pub stage_depths: Vec<usize>,
    pub heads: Vec<usize>,
    pub sr_ratios: Vec<usize>,
    pub mlp_ratio: usize,
    pub spectral_layer: bool,
    pub decoder_dim: usize,
    /// Initial positive probability encoded in the classifier bias; `None`
    /// starts the bias at zero.
    #[serde(default)]
    pub prior_probability: Option<f64>,
}

impl ModelConfig {
    /// Desk-scale dimensions.
    pub fn toy(in_bands: usize, variant: Variant, spectral_layer: bool) -> Self {
        Self {
            in_bands,
            num_classes: 1,
            multi_hot: false,
            variant,
            stage_dims: vec![16, 32, 64, 128],
            stage_depths: vec![1, 1, 1, 1],
            heads: vec![1, 2, 4, 8],
            sr_ratios: vec![8, 4, 2, 1],
            mlp_ratio: 4,
            spectral_layer,
            decoder_dim: 32,
            prior_probability: None,
        }
    }

    /// B0-sized encoder and decoder.
    pub fn b0(in_bands: usize, variant: Variant, spectral_layer: bool) -> Self {
        Self {
            stage_dims: vec![32, 64, 160, 256],
            stage_depths: vec![2, 2, 2, 2],
            heads: vec![1, 2, 5, 8],
            decoder_dim: 256,
            ..Self::toy(in_bands, variant, spectral_layer)
        }
    }

    pub fn first_stride(&self) -> usize {
        self.variant.first_stride()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.stage_dims.len();
        if n == 0 {
            bail!(InvalidArgument, "at least one encoder stage is required");
        }
        if self.stage_depths.len() != n || self.heads.len() != n || self.sr_ratios.len() != n {
            bail!(
                InvalidArgument,
                "stage_dims, stage_depths, heads and sr_ratios must have equal lengths"
            );
        }
        if self.in_bands == 0
            || self.num_classes == 0
            || self.decoder_dim == 0
            || self.mlp_ratio == 0
        {
            bail!(
                InvalidArgument,
                "band, class, decoder and mlp sizes must be positive"
            );
        }
        if let Some(p) = self.prior_probability {
            if !(p > 0.0 && p < 1.0) {
                bail!(InvalidArgument, "prior probability {p} is outside (0, 1)");
            }
        }
        if !self.multi_hot && self.num_classes != 1 {
            bail!(
                InvalidArgument,
                "a single-label model has one class, got {}",
                self.num_classes
            );
        }
        for i in 0..n {
            let (c, h) = (self.stage_dims[i], self.heads[i]);
            if c == 0 || h == 0 || c % h != 0 {
                bail!(
                    InvalidArgument,
                    "stage {i}: {c} channels are not divisible into {h} heads"
                );
            }
            if self.sr_ratios[i] == 0 {
                bail!(
                    InvalidArgument,
                    "stage {i}: reduction ratio must be positive"
                );
            }
        }
        Ok(())
    }
}

/// `100·(out_channels / (in_bands·stride²) − 1)`: change in data volume
/// across a strided first layer.
pub fn bottleneck_ratio(in_bands: usize, out_channels: usize, stride: usize) -> f64 {
    100.0 * (out_channels as f64 / (in_bands * stride * stride) as f64 - 1.0)
}

/// Per-band standardization of log radiance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl Normalizer {
    pub fn identity(bands: usize) -> Self {
        Self {
            mean: vec![0.0; bands],
            std: vec![1.0; bands],
        }
    }

    /// Statistics over the valid pixels of `cubes`.
    pub fn fit<'a>(cubes: impl IntoIterator<Item = &'a HyperCube<f32>>) -> Result<Self> {
        let mut sums: Vec<(f64, f64)> = Vec::new();
        let mut count = 0usize;
        for cube in cubes {
            if sums.is_empty() {
                sums = vec![(0.0, 0.0); cube.bands()];
            } else if sums.len() != cube.bands() {
                bail!(Shape, "cubes disagree on band count");
            }
            for b in 0..cube.bands() {
                let band = cube.band(b);
                for (p, &v) in band.iter().enumerate() {
                    if cube.nodata_mask()[p] {
                        continue;
                    }
                    let z = log_radiance(v) as f64;
                    sums[b].0 += z;
                    sums[b].1 += z * z;
                }
            }
            count += cube.valid_count();
        }
        if count == 0 {
            bail!(InvalidArgument, "no valid pixels to fit input statistics");
        }
        let (mean, std) = sums
            .iter()
            .map(|&(s, s2)| {
                let m = s / count as f64;
                let var = (s2 / count as f64 - m * m).max(0.0);
                (m as f32, (var.sqrt() as f32).max(1e-6))
            })
            .unzip();
        Ok(Self { mean, std })
    }

    /// `[1, bands, h, w]` input and `[1, 1, h, w]` validity weights; nodata
    /// pixels become zero in both.
    pub fn encode(&self, cube: &HyperCube<f32>) -> Result<(Tensor, Tensor)> {
        let (h, w, bands) = (cube.height(), cube.width(), cube.bands());
        if bands != self.mean.len() {
            bail!(
                Shape,
                "model expects {} bands, cube has {bands}",
                self.mean.len()
            );
        }
        let mask = cube.nodata_mask();
        let mut x = Vec::with_capacity(bands * h * w);
        for b in 0..bands {
            let (m, s) = (self.mean[b], self.std[b]);
            x.extend(cube.band(b).iter().zip(mask).map(|(&v, &nd)| {
                if nd {
                    0.0
                } else {
                    (log_radiance(v) - m) / s
                }
            }));
        }
        let weights = mask.iter().map(|&nd| if nd { 0.0 } else { 1.0 }).collect();
        Ok((
            Tensor::new(&[1, bands, h, w], x)?,
            Tensor::new(&[1, 1, h, w], weights)?,
        ))
    }
}

fn log_radiance(v: f32) -> f32 {
    v.max(1e-12).ln()
}

#[derive(Clone, Debug)]
struct Stage {
    embed: PatchEmbed,
    blocks: Vec<Block>,
    norm: LayerNorm,
}

#[derive(Clone, Debug)]
struct Decoder {
    proj: Vec<Conv>,
    fuse: Conv,
    fuse_bn: BatchNorm,
    upscale: Option<UpscaleBlock>,
    classifier: Conv,
}

/// Hierarchical transformer encoder with an all-MLP decoder.
#[derive(Clone, Debug)]
pub struct HyperSegFormer {
    config: ModelConfig,
    store: ParamStore,
    normalizer: Normalizer,
    stages: Vec<Stage>,
    decoder: Decoder,
}

impl HyperSegFormer {
    /// Deterministic initialization from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut stages = Vec::new();
        let mut c_in = config.in_bands;
        for (i, &c) in config.stage_dims.iter().enumerate() {
            let name = format!("encoder.stage{}", i + 1);
            let (kernel, stride) = if i == 0 {
                (7, config.first_stride())
            } else {
                (3, 2)
            };
            let embed = PatchEmbed::new(
                &mut store,
                &format!("{name}.embed"),
                c_in,
                c,
                kernel,
                stride,
                &mut rng,
            );
            let blocks = (0..config.stage_depths[i])
                .map(|j| {
                    Block::new(
                        &mut store,
                        &format!("{name}.block{j}"),
                        c,
                        config.heads[i],
                        config.sr_ratios[i],
                        config.mlp_ratio,
                        config.spectral_layer,
                        &mut rng,
                    )
                })
                .collect();
            let norm = LayerNorm::new(&mut store, &format!("{name}.norm"), c);
            stages.push(Stage {
                embed,
                blocks,
                norm,
            });
            c_in = c;
        }
        let d = config.decoder_dim;
        let proj = config
            .stage_dims
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Conv::pointwise(
                    &mut store,
                    &format!("decoder.proj{}", i + 1),
                    c,
                    d,
                    true,
                    &mut rng,
                )
            })
            .collect();
        let k = config.stage_dims.len();
        let decoder = Decoder {
            proj,
            fuse: Conv::pointwise(&mut store, "decoder.fuse", k * d, d, false, &mut rng),
            fuse_bn: BatchNorm::new(&mut store, "decoder.fuse_bn", d),
            upscale: config
                .variant
                .upscale()
                .then(|| UpscaleBlock::new(&mut store, "decoder.upscale", d, &mut rng)),
            classifier: Conv::pointwise(
                &mut store,
                "decoder.classifier",
                d,
                config.num_classes,
                true,
                &mut rng,
            ),
        };
        if let Some(p) = config.prior_probability {
            let logit = (p / (1.0 - p)).ln() as f32;
            *store.get_mut(decoder.classifier.bias.expect("classifier has a bias")) =
                Tensor::full(&[config.num_classes], logit);
        }
        let normalizer = Normalizer::identity(config.in_bands);
        Ok(Self {
            config,
            store,
            normalizer,
            stages,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn set_normalizer(&mut self, normalizer: Normalizer) -> Result<()> {
        if normalizer.mean.len() != self.config.in_bands
            || normalizer.std.len() != self.config.in_bands
        {
            bail!(
                Shape,
                "normalizer covers {} bands, model has {}",
                normalizer.mean.len(),
                self.config.in_bands
            );
        }
        self.normalizer = normalizer;
        Ok(())
    }

    /// Trainable scalar count.
    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    /// Stage feature maps, finest first.
    pub fn encode(&self, tape: &mut Tape, x: Var) -> Result<Vec<Var>> {
        let s = tape.shape(x);
        if s.len() != 4 || s[1] != self.config.in_bands {
            bail!(
                Shape,
                "model expects [n, {}, h, w] input, got {s:?}",
                self.config.in_bands
            );
        }
        let mut feats = Vec::with_capacity(self.stages.len());
        let mut h = x;
        for stage in &self.stages {
            h = stage.embed.forward(tape, &self.store, h)?;
            for block in &stage.blocks {
                h = block.forward(tape, &self.store, h)?;
            }
            h = stage.norm.forward(tape, &self.store, h)?;
            feats.push(h);
        }
        Ok(feats)
    }

    /// Decoder logits at the variant's native resolution.
    pub fn decode(&self, tape: &mut Tape, feats: &[Var], train: bool) -> Result<Var> {
        if feats.len() != self.decoder.proj.len() {
            bail!(
                Shape,
                "decoder expects {} feature maps, got {}",
                self.decoder.proj.len(),
                feats.len()
            );
        }
        let s0 = tape.shape(feats[0]).to_vec();
        let mut parts = Vec::with_capacity(feats.len());
        for (f, proj) in feats.iter().zip(&self.decoder.proj) {
            let p = proj.forward(tape, &self.store, *f)?;
            parts.push(tape.resize_bilinear(p, s0[2], s0[3])?);
        }
        let h = tape.concat(&parts)?;
        let h = self.decoder.fuse.forward(tape, &self.store, h)?;
        let h = self.decoder.fuse_bn.forward(tape, &self.store, h, train)?;
        let mut h = tape.relu(h);
        if let Some(up) = &self.decoder.upscale {
            h = up.forward(tape, &self.store, h, train)?;
        }
        self.decoder.classifier.forward(tape, &self.store, h)
    }

    /// Logits at native resolution: ¼ (base), ½ (ConvUp) or 1 (ConvUpStride).
    pub fn forward(&self, tape: &mut Tape, x: Var, train: bool) -> Result<Var> {
        let feats = self.encode(tape, x)?;
        self.decode(tape, &feats, train)
    }

    /// Logits bilinearly resized to the input resolution.
    pub fn forward_full(&self, tape: &mut Tape, x: Var, train: bool) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let logits = self.forward(tape, x, train)?;
        tape.resize_bilinear(logits, s[2], s[3])
    }
}
