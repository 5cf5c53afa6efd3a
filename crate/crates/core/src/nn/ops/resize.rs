use rayon::prelude::*;

use crate::error::{bail, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

/// Source taps for one output coordinate, half-pixel centers.
#[derive(Clone, Copy)]
struct Tap {
    i0: usize,
    i1: usize,
    t: f32,
}

fn taps(input: usize, output: usize) -> Vec<Tap> {
    let scale = input as f32 / output as f32;
    (0..output)
        .map(|o| {
            let src = ((o as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            Tap {
                i0,
                i1,
                t: src - i0 as f32,
            }
        })
        .collect()
}

impl Tape {
    /// Bilinear resize of the spatial axes (half-pixel centers, edge clamp).
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 || s[2] == 0 || s[3] == 0 || out_h == 0 || out_w == 0 {
            bail!(Shape, "cannot resize {s:?} to {out_h}x{out_w}");
        }
        if (s[2], s[3]) == (out_h, out_w) {
            let value = self.value(x).clone();
            return Ok(self.push("resize_identity", value, &[x], |_, _, gy| {
                vec![Some(gy.clone())]
            }));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ty, tx) = (taps(h, out_h), taps(w, out_w));
        let xv = self.value(x).data();
        let mut out = vec![0.0f32; n * c * out_h * out_w];
        out.par_chunks_mut(out_h * out_w)
            .enumerate()
            .for_each(|(plane, o)| {
                let p = &xv[plane * h * w..][..h * w];
                for (oy, a) in ty.iter().enumerate() {
                    for (ox, b) in tx.iter().enumerate() {
                        let top = p[a.i0 * w + b.i0] * (1.0 - b.t) + p[a.i0 * w + b.i1] * b.t;
                        let bot = p[a.i1 * w + b.i0] * (1.0 - b.t) + p[a.i1 * w + b.i1] * b.t;
                        o[oy * out_w + ox] = top * (1.0 - a.t) + bot * a.t;
                    }
                }
            });
        let value = Tensor::new(&[n, c, out_h, out_w], out)?;
        Ok(self.push("resize_bilinear", value, &[x], move |_, _, gy| {
            let gy = gy.data();
            let mut dx = vec![0.0f32; n * c * h * w];
            dx.par_chunks_mut(h * w).enumerate().for_each(|(plane, d)| {
                let g = &gy[plane * out_h * out_w..][..out_h * out_w];
                for (oy, a) in ty.iter().enumerate() {
                    for (ox, b) in tx.iter().enumerate() {
                        let v = g[oy * out_w + ox];
                        d[a.i0 * w + b.i0] += v * (1.0 - a.t) * (1.0 - b.t);
                        d[a.i0 * w + b.i1] += v * (1.0 - a.t) * b.t;
                        d[a.i1 * w + b.i0] += v * a.t * (1.0 - b.t);
                        d[a.i1 * w + b.i1] += v * a.t * b.t;
                    }
                }
            });
            vec![Some(Tensor::new(&[n, c, h, w], dx).expect("shape"))]
        }))
    }

    /// Concatenates NCHW tensors along channels.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            bail!(Shape, "concat of nothing");
        };
        let s0 = self.shape(first).to_vec();
        if s0.len() != 4 {
            bail!(Shape, "concat expects NCHW, got {s0:?}");
        }
        let (n, hw) = (s0[0], s0[2] * s0[3]);
        let mut chans = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != 4 || s[0] != n || s[2] != s0[2] || s[3] != s0[3] {
                bail!(Shape, "concat: {s:?} vs {s0:?}");
            }
            chans.push(s[1]);
        }
        let total: usize = chans.iter().sum();
        let mut out = Vec::with_capacity(n * total * hw);
        for i in 0..n {
            for (&x, &c) in xs.iter().zip(&chans) {
                out.extend_from_slice(&self.value(x).data()[i * c * hw..][..c * hw]);
            }
        }
        let value = Tensor::new(&[n, total, s0[2], s0[3]], out)?;
        Ok(self.push("concat", value, xs, move |ins, _, gy| {
            let gy = gy.data();
            let mut grads: Vec<Vec<f32>> = chans
                .iter()
                .map(|&c| Vec::with_capacity(n * c * hw))
                .collect();
            for i in 0..n {
                let mut off = i * total * hw;
                for (g, &c) in grads.iter_mut().zip(&chans) {
                    g.extend_from_slice(&gy[off..off + c * hw]);
                    off += c * hw;
                }
            }
            grads
                .into_iter()
                .zip(ins)
                .map(|(g, x)| Some(Tensor::new(x.shape(), g).expect("shape")))
                .collect()
        }))
    }
}
