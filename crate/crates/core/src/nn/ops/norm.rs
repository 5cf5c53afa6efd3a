use rayon::prelude::*;

use crate::error::{bail, Result};
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

/// Weight of the current batch in running-statistic updates.
pub const BN_MOMENTUM: f32 = 0.1;

/// Parameters and buffers of one batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct BatchNormSpec {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f32,
    pub momentum: f32,
}

fn check_affine(tape: &Tape, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
    let s = tape.shape(x);
    if s.len() != 4 {
        bail!(Shape, "normalization expects NCHW, got {s:?}");
    }
    let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
    if tape.shape(gamma) != [c] || tape.shape(beta) != [c] {
        bail!(
            Shape,
            "affine parameters {:?}/{:?} for {c} channels",
            tape.shape(gamma),
            tape.shape(beta)
        );
    }
    Ok((n, c, hw))
}

impl Tape {
    /// Normalizes each pixel's channel vector, then scales and shifts per channel.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f32) -> Result<Var> {
        let (n, c, hw) = check_affine(self, x, gamma, beta)?;
        let shape = self.shape(x).to_vec();
        let (xv, gv, bv) = (
            self.value(x).data(),
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let mut out = vec![0.0f32; xv.len()];
        let mut xhat = vec![0.0f32; xv.len()];
        let mut rstd = vec![0.0f32; n * hw];
        out.par_chunks_mut(c * hw)
            .zip(xhat.par_chunks_mut(c * hw))
            .zip(rstd.par_chunks_mut(hw))
            .enumerate()
            .for_each(|(i, ((o, xh), rs))| {
                let xs = &xv[i * c * hw..][..c * hw];
                for p in 0..hw {
                    let mean = (0..c).map(|ch| xs[ch * hw + p]).sum::<f32>() / c as f32;
                    let var = (0..c)
                        .map(|ch| (xs[ch * hw + p] - mean).powi(2))
                        .sum::<f32>()
                        / c as f32;
                    let r = 1.0 / (var + eps).sqrt();
                    rs[p] = r;
                    for ch in 0..c {
                        let z = (xs[ch * hw + p] - mean) * r;
                        xh[ch * hw + p] = z;
                        o[ch * hw + p] = z * gv[ch] + bv[ch];
                    }
                }
            });
        let value = Tensor::new(&shape, out)?;
        Ok(
            self.push("layer_norm", value, &[x, gamma, beta], move |ins, _, gy| {
                let (gv, gy) = (ins[1].data(), gy.data());
                let mut dx = vec![0.0f32; gy.len()];
                let partial: Vec<(Vec<f32>, Vec<f32>)> = dx
                    .par_chunks_mut(c * hw)
                    .enumerate()
                    .map(|(i, d)| {
                        let (g, xh) = (&gy[i * c * hw..][..c * hw], &xhat[i * c * hw..][..c * hw]);
                        let (mut dg, mut db) = (vec![0.0f32; c], vec![0.0f32; c]);
                        for p in 0..hw {
                            let (mut s1, mut s2) = (0.0f32, 0.0f32);
                            for ch in 0..c {
                                let k = ch * hw + p;
                                let dxh = g[k] * gv[ch];
                                s1 += dxh;
                                s2 += dxh * xh[k];
                                dg[ch] += g[k] * xh[k];
                                db[ch] += g[k];
                            }
                            let (m1, m2) = (s1 / c as f32, s2 / c as f32);
                            let r = rstd[i * hw + p];
                            for ch in 0..c {
                                let k = ch * hw + p;
                                d[k] = r * (g[k] * gv[ch] - m1 - xh[k] * m2);
                            }
                        }
                        (dg, db)
                    })
                    .collect();
                let (mut dg, mut db) = (vec![0.0f32; c], vec![0.0f32; c]);
                for (a, b) in &partial {
                    dg.iter_mut().zip(a).for_each(|(s, v)| *s += v);
                    db.iter_mut().zip(b).for_each(|(s, v)| *s += v);
                }
                vec![
                    Some(Tensor::new(&shape, dx).expect("shape")),
                    Some(Tensor::new(&[c], dg).expect("shape")),
                    Some(Tensor::new(&[c], db).expect("shape")),
                ]
            }),
        )
    }

    /// Per-channel normalization over batch and space. Training uses batch
    /// statistics and records updated running statistics; evaluation uses
    /// the stored running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        store: &ParamStore,
        spec: &BatchNormSpec,
        train: bool,
    ) -> Result<Var> {
        let gamma = self.param(store, spec.gamma);
        let beta = self.param(store, spec.beta);
        let (n, c, hw) = check_affine(self, x, gamma, beta)?;
        let m = n * hw;
        if train && m < 2 {
            bail!(
                InvalidArgument,
                "batch norm in training needs more than one value per channel"
            );
        }
        let shape = self.shape(x).to_vec();
        let xv = self.value(x).data();
        let (mean, var): (Vec<f32>, Vec<f32>) = if train {
            (0..c)
                .map(|ch| {
                    let vals = || {
                        (0..n).flat_map(move |i| {
                            xv[(i * c + ch) * hw..][..hw].iter().map(|&v| v as f64)
                        })
                    };
                    let mean = vals().sum::<f64>() / m as f64;
                    let var = vals().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
                    (mean as f32, var as f32)
                })
                .unzip()
        } else {
            (
                store.get(spec.running_mean).data().to_vec(),
                store.get(spec.running_var).data().to_vec(),
            )
        };
        let rstd: Vec<f32> = var.iter().map(|v| 1.0 / (v + spec.eps).sqrt()).collect();
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0f32; xv.len()];
        let mut out = vec![0.0f32; xv.len()];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * hw;
                for k in base..base + hw {
                    let z = (xv[k] - mean[ch]) * rstd[ch];
                    xhat[k] = z;
                    out[k] = z * gv[ch] + bv[ch];
                }
            }
        }
        if train {
            let mo = spec.momentum;
            let unbias = m as f32 / (m - 1) as f32;
            let rm: Vec<f32> = store
                .get(spec.running_mean)
                .data()
                .iter()
                .zip(&mean)
                .map(|(r, b)| (1.0 - mo) * r + mo * b)
                .collect();
            let rv: Vec<f32> = store
                .get(spec.running_var)
                .data()
                .iter()
                .zip(&var)
                .map(|(r, b)| (1.0 - mo) * r + mo * b * unbias)
                .collect();
            self.record_stat(spec.running_mean, Tensor::new(&[c], rm)?);
            self.record_stat(spec.running_var, Tensor::new(&[c], rv)?);
        }
        let value = Tensor::new(&shape, out)?;
        Ok(
            self.push("batch_norm", value, &[x, gamma, beta], move |ins, _, gy| {
                let (gv, gy) = (ins[1].data(), gy.data());
                let mut dx = vec![0.0f32; gy.len()];
                let (mut dg, mut db) = (vec![0.0f32; c], vec![0.0f32; c]);
                for ch in 0..c {
                    let idx = || (0..n).flat_map(move |i| (i * c + ch) * hw..(i * c + ch + 1) * hw);
                    let (mut s1, mut s2) = (0.0f32, 0.0f32);
                    for k in idx() {
                        s1 += gy[k];
                        s2 += gy[k] * xhat[k];
                    }
                    dg[ch] = s2;
                    db[ch] = s1;
                    let scale = gv[ch] * rstd[ch];
                    for k in idx() {
                        dx[k] = if train {
                            scale * (gy[k] - s1 / m as f32 - xhat[k] * s2 / m as f32)
                        } else {
                            scale * gy[k]
                        };
                    }
                }
                vec![
                    Some(Tensor::new(&shape, dx).expect("shape")),
                    Some(Tensor::new(&[c], dg).expect("shape")),
                    Some(Tensor::new(&[c], db).expect("shape")),
                ]
            }),
        )
    }
}
