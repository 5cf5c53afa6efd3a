use rayon::prelude::*;

use super::gemm;
use crate::error::{bail, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

struct Dims {
    heads: usize,
    d: usize,
    lq: usize,
    lk: usize,
}

fn dims(q: &[usize], k: &[usize], v: &[usize], heads: usize) -> Result<(usize, Dims)> {
    if q.len() != 4 || k.len() != 4 || k != v {
        bail!(
            Shape,
            "attention expects NCHW queries and equal-shaped keys/values, got {q:?}, {k:?}, {v:?}"
        );
    }
    if q[0] != k[0] || q[1] != k[1] {
        bail!(
            Shape,
            "queries {q:?} and keys {k:?} disagree on batch or channels"
        );
    }
    if heads == 0 || !q[1].is_multiple_of(heads) {
        bail!(
            InvalidArgument,
            "{} channels are not divisible into {heads} heads",
            q[1]
        );
    }
    Ok((
        q[0],
        Dims {
            heads,
            d: q[1] / heads,
            lq: q[2] * q[3],
            lk: k[2] * k[3],
        },
    ))
}

/// Row-softmax of `scale·Q_h K_hᵀ` for one (sample, head) block.
fn probs_block(q: &[f32], k: &[f32], dm: &Dims) -> Vec<f32> {
    let (lq, lk, d) = (dm.lq, dm.lk, dm.d);
    let scale = 1.0 / (d as f32).sqrt();
    let mut s = vec![0.0f32; lq * lk];
    gemm(lq, d, lk, q, (1, lq), k, (lk, 1), 0.0, &mut s, (lk, 1));
    for row in s.chunks_mut(lk) {
        let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b * scale));
        let mut total = 0.0f32;
        for v in row.iter_mut() {
            *v = (*v * scale - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    s
}

fn head_slice(x: &[f32], i: usize, len: usize) -> &[f32] {
    &x[i * len..][..len]
}

/// Attention weights per (sample, head), each `lq × lk` row-major.
pub fn attention_probs(q: &Tensor, k: &Tensor, heads: usize) -> Result<Vec<Vec<f32>>> {
    let (n, dm) = dims(q.shape(), k.shape(), k.shape(), heads)?;
    Ok((0..n * heads)
        .map(|i| {
            probs_block(
                head_slice(q.data(), i, dm.d * dm.lq),
                head_slice(k.data(), i, dm.d * dm.lk),
                &dm,
            )
        })
        .collect())
}

impl Tape {
    /// Multi-head `softmax(QKᵀ/√d)V` over token grids. Queries are
    /// `[n, c, hq, wq]`; keys and values share a (possibly coarser) grid.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (n, dm) = dims(self.shape(q), self.shape(k), self.shape(v), heads)?;
        let out_shape = self.shape(q).to_vec();
        let (qv, kv, vv) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let (qlen, klen) = (dm.d * dm.lq, dm.d * dm.lk);
        let mut out = vec![0.0f32; qv.len()];
        let probs: Vec<Vec<f32>> = out
            .par_chunks_mut(qlen)
            .enumerate()
            .map(|(i, o)| {
                let p = probs_block(&qv[i * qlen..][..qlen], &kv[i * klen..][..klen], &dm);
                gemm(
                    dm.lq,
                    dm.lk,
                    dm.d,
                    &p,
                    (dm.lk, 1),
                    &vv[i * klen..][..klen],
                    (1, dm.lk),
                    0.0,
                    o,
                    (1, dm.lq),
                );
                p
            })
            .collect();
        debug_assert_eq!(probs.len(), n * dm.heads);
        let value = Tensor::new(&out_shape, out)?;
        let k_shape = self.shape(k).to_vec();
        Ok(
            self.push("attention", value, &[q, k, v], move |ins, _, gy| {
                let (qv, kv, vv, gy) = (ins[0].data(), ins[1].data(), ins[2].data(), gy.data());
                let (lq, lk, d) = (dm.lq, dm.lk, dm.d);
                let scale = 1.0 / (d as f32).sqrt();
                let mut dq = vec![0.0f32; qv.len()];
                let mut dk = vec![0.0f32; kv.len()];
                let mut dv = vec![0.0f32; vv.len()];
                dq.par_chunks_mut(qlen)
                    .zip(dk.par_chunks_mut(klen))
                    .zip(dv.par_chunks_mut(klen))
                    .enumerate()
                    .for_each(|(i, ((dqh, dkh), dvh))| {
                        let p = &probs[i];
                        let (qh, kh, vh) = (
                            &qv[i * qlen..][..qlen],
                            &kv[i * klen..][..klen],
                            &vv[i * klen..][..klen],
                        );
                        let go = &gy[i * qlen..][..qlen];
                        gemm(lk, lq, d, p, (1, lk), go, (1, lq), 0.0, dvh, (1, lk));
                        let mut ds = vec![0.0f32; lq * lk];
                        gemm(lq, d, lk, go, (1, lq), vh, (lk, 1), 0.0, &mut ds, (lk, 1));
                        for (row, prow) in ds.chunks_mut(lk).zip(p.chunks(lk)) {
                            let dot: f32 = row.iter().zip(prow).map(|(a, b)| a * b).sum();
                            row.iter_mut()
                                .zip(prow)
                                .for_each(|(g, &pv)| *g = scale * pv * (*g - dot));
                        }
                        gemm(lq, lk, d, &ds, (lk, 1), kh, (1, lk), 0.0, dqh, (1, lq));
                        gemm(lk, lq, d, &ds, (1, lk), qh, (1, lq), 0.0, dkh, (1, lk));
                    });
                vec![
                    Some(Tensor::new(ins[0].shape(), dq).expect("shape")),
                    Some(Tensor::new(&k_shape, dk).expect("shape")),
                    Some(Tensor::new(&k_shape, dv).expect("shape")),
                ]
            }),
        )
    }
}
