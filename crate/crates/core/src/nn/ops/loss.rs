use crate::error::{bail, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

use super::act::sigmoid;

/// `max(z, 0) − z·y + ln(1 + e^−|z|)`.
pub(crate) fn bce_term(z: f32, y: f32) -> f32 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Tape {
    /// Mean sigmoid binary cross-entropy. `targets` matches the logits
    /// `[n, k, h, w]`; `weights [n, 1, h, w]` scales every class term of a
    /// pixel, and zero-weight pixels are excluded from the mean.
    pub fn bce_with_logits(
        &mut self,
        logits: Var,
        targets: &Tensor,
        weights: &Tensor,
    ) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 4
            || targets.shape() != s.as_slice()
            || weights.shape() != [s[0], 1, s[2], s[3]]
        {
            bail!(
                Shape,
                "bce: logits {s:?}, targets {:?}, weights {:?}",
                targets.shape(),
                weights.shape()
            );
        }
        let (n, k, hw) = (s[0], s[1], s[2] * s[3]);
        let wv = weights.data();
        let valid = wv.iter().filter(|&&w| w > 0.0).count();
        if valid == 0 {
            bail!(InvalidArgument, "loss over a batch without valid pixels");
        }
        let denom = (valid * k) as f64;
        let (z, y) = (self.value(logits).data(), targets.data());
        let mut total = 0.0f64;
        for i in 0..n {
            for c in 0..k {
                for p in 0..hw {
                    let w = wv[i * hw + p];
                    if w > 0.0 {
                        let idx = (i * k + c) * hw + p;
                        total += (w * bce_term(z[idx], y[idx])) as f64;
                    }
                }
            }
        }
        let value = Tensor::scalar((total / denom) as f32);
        let (targets, weights) = (targets.clone(), weights.clone());
        Ok(
            self.push("bce_with_logits", value, &[logits], move |ins, _, gy| {
                let scale = gy.data()[0] / denom as f32;
                let (z, y, wv) = (ins[0].data(), targets.data(), weights.data());
                let mut g = vec![0.0f32; z.len()];
                for i in 0..n {
                    for c in 0..k {
                        for p in 0..hw {
                            let w = wv[i * hw + p];
                            if w > 0.0 {
                                let idx = (i * k + c) * hw + p;
                                g[idx] = scale * w * (sigmoid(z[idx]) - y[idx]);
                            }
                        }
                    }
                }
                vec![Some(Tensor::new(ins[0].shape(), g).expect("shape"))]
            }),
        )
    }
}
