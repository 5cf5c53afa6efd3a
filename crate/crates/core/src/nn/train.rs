use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::model::{HyperSegFormer, Normalizer};
use super::optim::{adam_step, AdamConfig, AdamState};
use super::params::ParamStore;
use super::sampler::weighted_draws;
use super::tape::Tape;
use super::tensor::Tensor;
use crate::datacube::{HyperCube, LabelMask};
use crate::error::{bail, Result};

/// Learning rate for the transformer segmenters.
pub const TRANSFORMER_LR: f64 = 6e-5;
/// Learning rate for convolutional baselines.
pub const CNN_LR: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 50;
pub const DEFAULT_BATCH: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub oversample_positives: bool,
    /// Multiply per-pixel loss terms by the samples' pixel weights.
    pub mf_loss_weight: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: TRANSFORMER_LR,
            batch_size: DEFAULT_BATCH,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            oversample_positives: true,
            mf_loss_weight: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            bail!(
                InvalidArgument,
                "learning rate must be a finite non-negative number, got {}",
                self.learning_rate
            );
        }
        if self.batch_size == 0 {
            bail!(InvalidArgument, "batch size must be at least 1");
        }
        Ok(())
    }
}

/// One training tile.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub cube: HyperCube<f32>,
    pub label: LabelMask,
    /// Optional per-pixel loss weights, row-major.
    pub pixel_weights: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Progress stored with the last-epoch checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub epochs_done: usize,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub adam_step: u64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Receives `last.ckpt` after every epoch and `best.ckpt` on improvement.
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from `last.ckpt` in `checkpoint_dir` when present.
    pub resume: bool,
    /// Stop once this many epochs are done, as if interrupted.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub completed: bool,
}

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

struct Encoded {
    x: Tensor,
    target: Tensor,
    weight: Tensor,
    terms: usize,
}

fn encode_all(
    model: &HyperSegFormer,
    samples: &[TrainSample],
    use_weights: bool,
) -> Result<Vec<Encoded>> {
    let k = model.config().num_classes;
    let mut shape = None;
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (h, w) = (s.cube.height(), s.cube.width());
            if *shape.get_or_insert((h, w)) != (h, w) {
                bail!(
                    Shape,
                    "sample {i} is {h}x{w}; all tiles must share one size"
                );
            }
            if s.label.height() != h || s.label.width() != w || s.label.classes() != k {
                bail!(
                    Shape,
                    "sample {i}: label does not match a {h}x{w} tile with {k} classes"
                );
            }
            let (x, mut weight) = model.normalizer().encode(&s.cube)?;
            if use_weights {
                let Some(pw) = &s.pixel_weights else {
                    bail!(InvalidArgument, "sample {i} has no pixel weights");
                };
                if pw.len() != h * w || pw.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    bail!(
                        InvalidArgument,
                        "sample {i}: pixel weights must be {h}x{w} finite non-negative values"
                    );
                }
                weight
                    .data_mut()
                    .iter_mut()
                    .zip(pw)
                    .for_each(|(a, b)| *a *= b);
            }
            let target = Tensor::new(
                &[1, k, h, w],
                s.label.values().iter().map(|&v| v as f32).collect(),
            )?;
            let terms = weight.data().iter().filter(|&&v| v > 0.0).count() * k;
            Ok(Encoded {
                x,
                target,
                weight,
                terms,
            })
        })
        .collect()
}

fn stack_batch(items: &[&Encoded]) -> Result<(Tensor, Tensor, Tensor, usize)> {
    let x = Tensor::stack(&items.iter().map(|e| e.x.clone()).collect::<Vec<_>>())?;
    let t = Tensor::stack(&items.iter().map(|e| e.target.clone()).collect::<Vec<_>>())?;
    let w = Tensor::stack(&items.iter().map(|e| e.weight.clone()).collect::<Vec<_>>())?;
    Ok((x, t, w, items.iter().map(|e| e.terms).sum()))
}

/// RNG for one epoch, independent of how many epochs ran before.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

/// Loss-weighted mean BCE of `model` over `data` in evaluation mode.
fn evaluate(model: &HyperSegFormer, data: &[Encoded], batch: usize) -> Result<f64> {
    let (mut total, mut terms) = (0.0f64, 0usize);
    for chunk in data.chunks(batch) {
        let refs: Vec<&Encoded> = chunk.iter().collect();
        let (x, t, w, n) = stack_batch(&refs)?;
        if n == 0 {
            continue;
        }
        let mut tape = Tape::inference();
        let xv = tape.constant(x);
        let logits = model.forward_full(&mut tape, xv, false)?;
        let loss = tape.bce_with_logits(logits, &t, &w)?;
        tape.check_finite()?;
        total += tape.value(loss).data()[0] as f64 * n as f64;
        terms += n;
    }
    if terms == 0 {
        bail!(InvalidArgument, "no valid pixels to evaluate");
    }
    Ok(total / terms as f64)
}

fn store_tensors(store: &ParamStore, prefix: &str) -> Vec<(String, Tensor)> {
    store
        .entries()
        .iter()
        .map(|e| (format!("{prefix}{}", e.name), e.value.clone()))
        .collect()
}

fn restore(store: &mut ParamStore, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let name = format!("{prefix}{}", store.entry(id).name);
        let Some(t) = ckpt.tensor(&name) else {
            bail!(Format, "checkpoint lacks tensor {name}");
        };
        if t.shape() != store.get(id).shape() {
            bail!(Format, "tensor {name} has the wrong shape");
        }
        *store.get_mut(id) = t.clone();
    }
    Ok(())
}

/// Minibatch Adam on sigmoid BCE. The model ends up holding the parameters
/// of the epoch with the lowest validation loss (training loss when `val`
/// is empty). Each epoch's sampling depends only on `(seed, epoch)`, so a
/// resumed run matches an uninterrupted one bit for bit.
pub fn train(
    model: &mut HyperSegFormer,
    train: &[TrainSample],
    val: &[TrainSample],
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        bail!(InvalidArgument, "training set is empty");
    }
    let dir = opts.checkpoint_dir.as_deref();
    let last_path = dir.map(|d| d.join(LAST_CHECKPOINT));
    let resume_from = match (&last_path, opts.resume) {
        (Some(p), true) if p.exists() => Some(Checkpoint::load(p)?),
        _ => None,
    };

    let mut adam = AdamState::new(model.store());
    let mut history = Vec::new();
    let (mut best_epoch, mut best_val) = (None, None);
    let mut best_store: Option<ParamStore> = None;
    let mut start = 0;
    if let Some(ckpt) = &resume_from {
        let Some(state) = &ckpt.train else {
            bail!(Format, "checkpoint has no training state to resume");
        };
        if ckpt.model != *model.config() {
            bail!(
                InvalidArgument,
                "checkpoint model configuration differs from the requested one"
            );
        }
        let mut resumed_cfg = state.config.clone();
        resumed_cfg.epochs = cfg.epochs;
        if resumed_cfg != *cfg {
            bail!(
                InvalidArgument,
                "training configuration differs from the checkpoint's"
            );
        }
        model.set_normalizer(ckpt.normalizer.clone())?;
        restore(model.store_mut(), ckpt, "")?;
        for id in model.store().ids().collect::<Vec<_>>() {
            let name = model.store().entry(id).name.clone();
            for (prefix, slot) in [("adam.m.", &mut adam.m), ("adam.v.", &mut adam.v)] {
                let Some(t) = ckpt.tensor(&format!("{prefix}{name}")) else {
                    bail!(Format, "checkpoint lacks optimizer state for {name}");
                };
                slot[id.index()] = t.data().to_vec();
            }
        }
        adam.step = state.adam_step;
        history = state.history.clone();
        (best_epoch, best_val) = (state.best_epoch, state.best_val_loss);
        if best_epoch.is_some() {
            let mut s = model.store().clone();
            restore(&mut s, ckpt, "best.")?;
            best_store = Some(s);
        }
        start = state.epochs_done;
    } else {
        model.set_normalizer(Normalizer::fit(train.iter().map(|s| &s.cube))?)?;
    }

    let train_data = encode_all(model, train, cfg.mf_loss_weight)?;
    let val_data = encode_all(model, val, false)?;
    let positive: Vec<bool> = train.iter().map(|s| s.label.has_positive()).collect();
    let opt = AdamConfig::new(cfg.learning_rate as f32);

    for epoch in start..cfg.epochs {
        if opts.stop_after.is_some_and(|s| epoch >= s) {
            return Ok(TrainOutcome {
                history,
                best_epoch,
                best_val_loss: best_val,
                completed: false,
            });
        }
        let mut rng = epoch_rng(cfg.seed, epoch);
        let order: Vec<usize> = if cfg.oversample_positives {
            weighted_draws(&positive, train_data.len(), &mut rng)?
        } else {
            let mut o: Vec<usize> = (0..train_data.len()).collect();
            o.shuffle(&mut rng);
            o
        };
        let (mut total, mut terms) = (0.0f64, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Encoded> = chunk.iter().map(|&i| &train_data[i]).collect();
            let (x, t, w, n) = stack_batch(&refs)?;
            if n == 0 {
                continue;
            }
            let mut tape = Tape::new();
            let xv = tape.constant(x);
            let logits = model.forward_full(&mut tape, xv, true)?;
            let loss = tape.bce_with_logits(logits, &t, &w)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                bail!(Numeric, "loss is {value} at epoch {epoch}, batch {b}");
            }
            tape.check_finite().map_err(|e| {
                crate::error::Error::Numeric(format!("epoch {epoch}, batch {b}: {e}"))
            })?;
            let grads = tape.backward(loss, Tensor::scalar(1.0))?;
            adam_step(model.store_mut(), &grads.params(), &mut adam, &opt);
            for (id, value) in tape.take_stat_updates() {
                *model.store_mut().get_mut(id) = value;
            }
            total += value as f64 * n as f64;
            terms += n;
        }
        let train_loss = total / terms.max(1) as f64;
        let val_loss = if val_data.is_empty() {
            train_loss
        } else {
            evaluate(model, &val_data, cfg.batch_size)?
        };
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if best_val.is_none_or(|b| val_loss < b) {
            best_val = Some(val_loss);
            best_epoch = Some(epoch);
            best_store = Some(model.store().clone());
            if let Some(d) = dir {
                let mut best = Checkpoint::from_model(model);
                best.tensors = store_tensors(model.store(), "");
                best.save(&d.join(BEST_CHECKPOINT))?;
            }
        }
        if let Some(p) = &last_path {
            let mut ckpt = Checkpoint::from_model(model);
            for id in model.store().ids() {
                let e = model.store().entry(id);
                ckpt.tensors.push((
                    format!("adam.m.{}", e.name),
                    Tensor::new(e.value.shape(), adam.m[id.index()].clone())?,
                ));
                ckpt.tensors.push((
                    format!("adam.v.{}", e.name),
                    Tensor::new(e.value.shape(), adam.v[id.index()].clone())?,
                ));
            }
            if let Some(s) = &best_store {
                ckpt.tensors.extend(store_tensors(s, "best."));
            }
            ckpt.train = Some(TrainState {
                config: cfg.clone(),
                epochs_done: epoch + 1,
                history: history.clone(),
                best_epoch,
                best_val_loss: best_val,
                adam_step: adam.step,
            });
            ckpt.save(p)?;
        }
    }
    if let Some(s) = best_store {
        *model.store_mut() = s;
    }
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_loss: best_val,
        completed: true,
    })
}

/// Path of the best checkpoint inside a training directory.
pub fn best_checkpoint(dir: &Path) -> PathBuf {
    dir.join(BEST_CHECKPOINT)
}
