use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{bail, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) type BackwardFn = Box<dyn FnOnce(&[&Tensor], &Tensor, &Tensor) -> Vec<Option<Tensor>>>;

struct Node {
    op: &'static str,
    value: Tensor,
    inputs: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
}

/// Records a forward computation for one reverse sweep.
pub struct Tape {
    nodes: Vec<Node>,
    grad_enabled: bool,
    non_finite: Option<String>,
    params: Vec<(ParamId, usize)>,
    stat_updates: Vec<(ParamId, Tensor)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grad_enabled: true,
            non_finite: None,
            params: Vec::new(),
            stat_updates: Vec::new(),
        }
    }

    /// Tape that keeps no backward state.
    pub fn inference() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    fn leaf_node(&mut self, op: &'static str, value: Tensor, requires_grad: bool) -> Var {
        self.note_finite(op, &value);
        self.nodes.push(Node {
            op,
            value,
            inputs: Vec::new(),
            backward: None,
            requires_grad: requires_grad && self.grad_enabled,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf_node("constant", value, false)
    }

    /// Leaf whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.leaf_node("leaf", value, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let trainable = store.entry(id).trainable;
        let v = self.leaf_node("param", store.get(id).clone(), trainable);
        self.params.push((id, v.0));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn note_finite(&mut self, op: &'static str, value: &Tensor) {
        if self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(format!("op `{op}` (node {})", self.nodes.len()));
        }
    }

    /// Records an op. `backward` receives the input values, the output value
    /// and the output gradient, and returns one gradient per input.
    pub(crate) fn push(
        &mut self,
        op: &'static str,
        value: Tensor,
        inputs: &[Var],
        backward: impl FnOnce(&[&Tensor], &Tensor, &Tensor) -> Vec<Option<Tensor>> + 'static,
    ) -> Var {
        self.note_finite(op, &value);
        let requires_grad =
            self.grad_enabled && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            inputs: inputs.iter().map(|v| v.0).collect(),
            backward: if requires_grad {
                Some(Box::new(backward))
            } else {
                None
            },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Whether any op so far produced a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        match &self.non_finite {
            Some(at) => bail!(Numeric, "non-finite value produced by {at}"),
            None => Ok(()),
        }
    }

    pub(crate) fn record_stat(&mut self, id: ParamId, value: Tensor) {
        if self.grad_enabled {
            self.stat_updates.push((id, value));
        }
    }

    /// Running-statistic updates gathered during a training forward pass.
    pub fn take_stat_updates(&mut self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut self.stat_updates)
    }

    /// Reverse sweep from `root`, seeded with `seed` (same shape as root).
    pub fn backward(&mut self, root: Var, seed: Tensor) -> Result<Gradients> {
        if seed.shape() != self.shape(root) {
            bail!(
                Shape,
                "seed {:?} for root {:?}",
                seed.shape(),
                self.shape(root)
            );
        }
        self.check_finite()?;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let Some(f) = self.nodes[i].backward.take() else {
                continue;
            };
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|&j| &self.nodes[j].value).collect();
            let input_grads = f(&inputs, &node.value, &g);
            debug_assert_eq!(input_grads.len(), node.inputs.len());
            for (&j, gj) in node.inputs.iter().zip(input_grads) {
                let Some(gj) = gj else { continue };
                if !self.nodes[j].requires_grad {
                    continue;
                }
                if gj.shape() != self.nodes[j].value.shape() {
                    bail!(
                        Shape,
                        "gradient of `{}` has shape {:?}, value {:?}",
                        node.op,
                        gj.shape(),
                        self.nodes[j].value.shape()
                    );
                }
                if !gj.all_finite() {
                    bail!(
                        Numeric,
                        "non-finite gradient flowing out of `{}` (node {i})",
                        node.op
                    );
                }
                match &mut grads[j] {
                    Some(acc) => acc.add_assign(&gj),
                    slot => *slot = Some(gj),
                }
            }
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }
}

/// Gradients of leaves and parameters after a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Parameter gradients; a parameter used twice gets the summed gradient.
    pub fn params(&self) -> Vec<(ParamId, Tensor)> {
        let mut out: Vec<(ParamId, Tensor)> = Vec::new();
        for &(id, node) in &self.params {
            let Some(g) = &self.grads[node] else { continue };
            match out.iter_mut().find(|(p, _)| *p == id) {
                Some((_, acc)) => acc.add_assign(g),
                None => out.push((id, g.clone())),
            }
        }
        out.sort_by_key(|(id, _)| *id);
        out
    }
}
