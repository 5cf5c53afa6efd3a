use crate::error::{bail, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

const SQRT_2_OVER_PI: f32 = 0.797_884_6;
const GELU_C: f32 = 0.044_715;

fn gelu(x: f32) -> f32 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh())
}

fn gelu_grad(x: f32) -> f32 {
    let t = (SQRT_2_OVER_PI * (x + GELU_C * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x)
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        self.push("gelu", value, &[x], |ins, _, gy| {
            let mut g = gy.clone();
            g.data_mut()
                .iter_mut()
                .zip(ins[0].data())
                .for_each(|(d, &x)| *d *= gelu_grad(x));
            vec![Some(g)]
        })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push("relu", value, &[x], |ins, _, gy| {
            let mut g = gy.clone();
            g.data_mut()
                .iter_mut()
                .zip(ins[0].data())
                .for_each(|(d, &x)| {
                    if x <= 0.0 {
                        *d = 0.0;
                    }
                });
            vec![Some(g)]
        })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).map(sigmoid);
        self.push("sigmoid", value, &[x], |_, out, gy| {
            let mut g = gy.clone();
            g.data_mut()
                .iter_mut()
                .zip(out.data())
                .for_each(|(d, &s)| *d *= s * (1.0 - s));
            vec![Some(g)]
        })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            bail!(Shape, "add: {:?} vs {:?}", self.shape(a), self.shape(b));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push("add", value, &[a, b], |_, _, gy| {
            vec![Some(gy.clone()), Some(gy.clone())]
        }))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum() as f32);
        self.push("sum", value, &[x], |ins, _, gy| {
            vec![Some(Tensor::full(ins[0].shape(), gy.data()[0]))]
        })
    }
}
