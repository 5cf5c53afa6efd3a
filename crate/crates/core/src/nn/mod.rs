//! Tensor engine with reverse-mode gradients and the segmentation network.

mod checkpoint;
pub mod gradcheck;
mod infer;
mod layers;
mod model;
mod ops;
mod optim;
mod params;
mod sampler;
mod tape;
mod tensor;
mod train;

pub use checkpoint::{load_model, save_model, Checkpoint, TensorRecord};
pub use infer::{infer, predict_tile, tile_logits};
pub use layers::{
    BatchNorm, Block, Conv, EfficientSelfAttention, LayerNorm, MixFfn, PatchEmbed, SpectralBlock,
    UpscaleBlock,
};
pub use model::{bottleneck_ratio, HyperSegFormer, ModelConfig, Normalizer, Variant};
pub use ops::{attention_probs, conv_out, BatchNormSpec, Conv2dSpec, BN_MOMENTUM};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use sampler::{sampler_weights, weighted_draws, weighted_sampler};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{
    best_checkpoint, epoch_rng, train, EpochRecord, TrainConfig, TrainOptions, TrainOutcome,
    TrainSample, TrainState, BEST_CHECKPOINT, CNN_LR, DEFAULT_BATCH, DEFAULT_EPOCHS,
    LAST_CHECKPOINT, TRANSFORMER_LR,
};

#[cfg(test)]
mod tests;
