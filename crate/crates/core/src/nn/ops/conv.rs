use rayon::prelude::*;

use super::gemm;
use crate::error::{bail, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

/// Stride, zero padding and grouping of a 2-D convolution. Groups are 1
/// (dense) or equal to the channel count (depthwise).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv2dSpec {
    pub fn new(stride: usize, padding: usize) -> Self {
        Self {
            stride,
            padding,
            groups: 1,
        }
    }

    pub fn depthwise(stride: usize, padding: usize, channels: usize) -> Self {
        Self {
            stride,
            padding,
            groups: channels,
        }
    }
}

/// `floor((size + 2·pad − kernel) / stride) + 1`.
pub fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        bail!(InvalidArgument, "kernel and stride must be positive");
    }
    if size + 2 * pad < kernel {
        bail!(
            Shape,
            "kernel {kernel} does not fit input {size} with padding {pad}"
        );
    }
    Ok((size + 2 * pad - kernel) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn l(&self) -> usize {
        self.ho * self.wo
    }

    /// Input coordinate feeding output `o` at kernel offset `k`, if inside.
    #[inline]
    fn src(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let p = (o * self.stride + k) as isize - self.pad as isize;
        (p >= 0 && (p as usize) < extent).then_some(p as usize)
    }
}

fn im2col(x: &[f32], g: &Geom) -> Vec<f32> {
    let l = g.l();
    let mut col = vec![0.0f32; g.ckk() * l];
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &mut col[((ci * g.kh + ki) * g.kw + kj) * l..][..l];
                for oy in 0..g.ho {
                    let Some(iy) = g.src(oy, ki, g.h) else {
                        continue;
                    };
                    let xrow = &x[(ci * g.h + iy) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        if let Some(ix) = g.src(ox, kj, g.w) {
                            row[oy * g.wo + ox] = xrow[ix];
                        }
                    }
                }
            }
        }
    }
    col
}

fn col2im(col: &[f32], g: &Geom, dx: &mut [f32]) {
    let l = g.l();
    for ci in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &col[((ci * g.kh + ki) * g.kw + kj) * l..][..l];
                for oy in 0..g.ho {
                    let Some(iy) = g.src(oy, ki, g.h) else {
                        continue;
                    };
                    let xrow = &mut dx[(ci * g.h + iy) * g.w..][..g.w];
                    for ox in 0..g.wo {
                        if let Some(ix) = g.src(ox, kj, g.w) {
                            xrow[ix] += row[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

impl Tape {
    /// Cross-correlation of `x [n, c, h, w]` with `w [o, c/groups, kh, kw]`
    /// plus optional `bias [o]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: Conv2dSpec) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            bail!(
                Shape,
                "conv2d expects rank-4 input and weight, got {xs:?} and {ws:?}"
            );
        }
        let (n, c, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (o, cg, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        let depthwise = spec.groups > 1;
        if spec.groups == 0 || (depthwise && (spec.groups != c || o != c || cg != 1)) {
            bail!(
                InvalidArgument,
                "groups must be 1 or depthwise (groups = channels = outputs), got {} for {c} -> {o}",
                spec.groups
            );
        }
        if !depthwise && cg != c {
            bail!(Shape, "weight expects {cg} input channels, input has {c}");
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                bail!(Shape, "bias {:?} for {o} output channels", self.shape(b));
            }
        }
        let g = Geom {
            c: if depthwise { 1 } else { c },
            h,
            w: wd,
            kh,
            kw,
            stride: spec.stride,
            pad: spec.padding,
            ho: conv_out(h, kh, spec.stride, spec.padding)?,
            wo: conv_out(wd, kw, spec.stride, spec.padding)?,
        };
        let out_shape = [n, o, g.ho, g.wo];
        let bias_data = bias.map(|b| self.value(b).data().to_vec());
        let inputs: Vec<Var> = std::iter::once(x).chain([w]).chain(bias).collect();
        let has_bias = bias.is_some();
        if depthwise {
            let out = depthwise_forward(
                self.value(x).data(),
                self.value(w).data(),
                bias_data.as_deref(),
                n,
                c,
                &g,
            );
            let value = Tensor::new(&out_shape, out)?;
            let var = self.push("depthwise_conv2d", value, &inputs, move |ins, _, gy| {
                let (dx, dw, db) =
                    depthwise_backward(ins[0].data(), ins[1].data(), gy.data(), n, c, &g);
                let mut grads = vec![
                    Some(Tensor::new(&[n, c, h, wd], dx).expect("shape")),
                    Some(Tensor::new(&[c, 1, kh, kw], dw).expect("shape")),
                ];
                if has_bias {
                    grads.push(Some(Tensor::new(&[c], db).expect("shape")));
                }
                grads
            });
            return Ok(var);
        }

        let (ckk, l) = (g.ckk(), g.l());
        let keep = self.grad_enabled();
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![0.0f32; n * o * l];
        let cols: Vec<Option<Vec<f32>>> = out
            .par_chunks_mut(o * l)
            .enumerate()
            .map(|(i, out_n)| {
                let x_n = &xv[i * c * h * wd..][..c * h * wd];
                let col = if g.pointwise() {
                    None
                } else {
                    Some(im2col(x_n, &g))
                };
                let src = col.as_deref().unwrap_or(x_n);
                gemm(o, ckk, l, wv, (ckk, 1), src, (l, 1), 0.0, out_n, (l, 1));
                if let Some(b) = &bias_data {
                    for (oc, row) in out_n.chunks_mut(l).enumerate() {
                        row.iter_mut().for_each(|v| *v += b[oc]);
                    }
                }
                if keep {
                    col
                } else {
                    None
                }
            })
            .collect();
        let value = Tensor::new(&out_shape, out)?;
        let var = self.push("conv2d", value, &inputs, move |ins, _, gy| {
            let (xv, wv, gy) = (ins[0].data(), ins[1].data(), gy.data());
            let per_sample: Vec<(Vec<f32>, Vec<f32>)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let gy_n = &gy[i * o * l..][..o * l];
                    let x_n = &xv[i * c * h * wd..][..c * h * wd];
                    let src = cols[i].as_deref().unwrap_or(x_n);
                    let mut dw = vec![0.0f32; o * ckk];
                    gemm(o, l, ckk, gy_n, (l, 1), src, (1, l), 0.0, &mut dw, (ckk, 1));
                    let mut dcol = vec![0.0f32; ckk * l];
                    gemm(
                        ckk,
                        o,
                        l,
                        wv,
                        (1, ckk),
                        gy_n,
                        (l, 1),
                        0.0,
                        &mut dcol,
                        (l, 1),
                    );
                    let dx = if g.pointwise() {
                        dcol
                    } else {
                        let mut dx = vec![0.0f32; c * h * wd];
                        col2im(&dcol, &g, &mut dx);
                        dx
                    };
                    (dx, dw)
                })
                .collect();
            let mut dx = Vec::with_capacity(n * c * h * wd);
            let mut dw = vec![0.0f32; o * ckk];
            for (dx_n, dw_n) in &per_sample {
                dx.extend_from_slice(dx_n);
                dw.iter_mut().zip(dw_n).for_each(|(a, b)| *a += b);
            }
            let mut grads = vec![
                Some(Tensor::new(&[n, c, h, wd], dx).expect("shape")),
                Some(Tensor::new(&[o, c, kh, kw], dw).expect("shape")),
            ];
            if has_bias {
                let mut db = vec![0.0f32; o];
                for i in 0..n {
                    for (oc, acc) in db.iter_mut().enumerate() {
                        *acc += gy[(i * o + oc) * l..][..l].iter().sum::<f32>();
                    }
                }
                grads.push(Some(Tensor::new(&[o], db).expect("shape")));
            }
            grads
        });
        Ok(var)
    }
}

fn depthwise_forward(
    x: &[f32],
    w: &[f32],
    b: Option<&[f32]>,
    n: usize,
    c: usize,
    g: &Geom,
) -> Vec<f32> {
    let (hw, l, kk) = (g.h * g.w, g.l(), g.kh * g.kw);
    let mut out = vec![0.0f32; n * c * l];
    out.par_chunks_mut(l).enumerate().for_each(|(plane, o)| {
        let ch = plane % c;
        let xp = &x[plane * hw..][..hw];
        let wk = &w[ch * kk..][..kk];
        let b0 = b.map_or(0.0, |b| b[ch]);
        for oy in 0..g.ho {
            for ox in 0..g.wo {
                let mut acc = b0;
                for ki in 0..g.kh {
                    let Some(iy) = g.src(oy, ki, g.h) else {
                        continue;
                    };
                    for kj in 0..g.kw {
                        if let Some(ix) = g.src(ox, kj, g.w) {
                            acc += wk[ki * g.kw + kj] * xp[iy * g.w + ix];
                        }
                    }
                }
                o[oy * g.wo + ox] = acc;
            }
        }
    });
    out
}

fn depthwise_backward(
    x: &[f32],
    w: &[f32],
    gy: &[f32],
    n: usize,
    c: usize,
    g: &Geom,
) -> (Vec<f32>, Vec<f32>, Vec<f32>) {
    let (hw, l, kk) = (g.h * g.w, g.l(), g.kh * g.kw);
    let planes: Vec<(Vec<f32>, Vec<f32>, f32)> = (0..n * c)
        .into_par_iter()
        .map(|plane| {
            let ch = plane % c;
            let xp = &x[plane * hw..][..hw];
            let gp = &gy[plane * l..][..l];
            let wk = &w[ch * kk..][..kk];
            let mut dx = vec![0.0f32; hw];
            let mut dw = vec![0.0f32; kk];
            for oy in 0..g.ho {
                for ox in 0..g.wo {
                    let gv = gp[oy * g.wo + ox];
                    for ki in 0..g.kh {
                        let Some(iy) = g.src(oy, ki, g.h) else {
                            continue;
                        };
                        for kj in 0..g.kw {
                            if let Some(ix) = g.src(ox, kj, g.w) {
                                dx[iy * g.w + ix] += wk[ki * g.kw + kj] * gv;
                                dw[ki * g.kw + kj] += xp[iy * g.w + ix] * gv;
                            }
                        }
                    }
                }
            }
            (dx, dw, gp.iter().sum())
        })
        .collect();
    let mut dx = Vec::with_capacity(n * c * hw);
    let mut dw = vec![0.0f32; c * kk];
    let mut db = vec![0.0f32; c];
    for (plane, (dxp, dwp, dbp)) in planes.iter().enumerate() {
        let ch = plane % c;
        dx.extend_from_slice(dxp);
        dw[ch * kk..][..kk]
            .iter_mut()
            .zip(dwp)
            .for_each(|(a, b)| *a += b);
        db[ch] += dbp;
    }
    (dx, dw, db)
}
