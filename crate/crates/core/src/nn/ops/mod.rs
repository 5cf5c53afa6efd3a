//! Differentiable operations recorded on a [`Tape`](super::Tape).

mod act;
mod attention;
mod conv;
mod loss;
mod norm;
mod resize;

pub(crate) use act::sigmoid;
pub use attention::attention_probs;
pub use conv::{conv_out, Conv2dSpec};
pub use norm::{BatchNormSpec, BN_MOMENTUM};

/// `c = a·b + beta·c` on strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rs: usize, cs: usize, r: usize, cc: usize| (r - 1) * rs + (cc - 1) * cs;
    if k > 0 {
        assert!(last(rsa, csa, m, k) < a.len() && last(rsb, csb, k, n) < b.len());
    }
    assert!(last(rsc, csc, m, n) < c.len());
    // SAFETY: every addressed element was bounds-checked above.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}
