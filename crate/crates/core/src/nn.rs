//! Parameter blocks shared by the network layers.

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Graph, NodeId, ParamId, ParamStore};

/// Affine map `x·W + b`, `W` of shape `[in, out]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let w = store.add_xavier(format!("{name}.w"), fan_in, fan_out, rng);
        let b = store.add_constant(format!("{name}.b"), &[fan_out], 0.0);
        Linear { w, b: Some(b) }
    }

    pub fn without_bias(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let w = store.add_xavier(format!("{name}.w"), fan_in, fan_out, rng);
        Linear { w, b: None }
    }

    pub fn fan_in(&self, store: &ParamStore) -> usize {
        store.value(self.w).shape()[0]
    }

    pub fn fan_out(&self, store: &ParamStore) -> usize {
        store.value(self.w).shape()[1]
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.w);
        let b = self.b.map(|b| g.param(store, b));
        g.affine(x, w, b)
    }
}

/// Affine, ReLU, affine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    /// Hidden width equals the output width.
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            first: Linear::new(store, &format!("{name}.0"), fan_in, fan_out, rng),
            second: Linear::new(store, &format!("{name}.1"), fan_out, fan_out, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let h = self.first.forward(g, store, x)?;
        let h = g.relu(h);
        self.second.forward(g, store, h)
    }
}

/// Layer normalization over the last axis with learned gain and shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.add_constant(format!("{name}.gamma"), &[width], 1.0),
            beta: store.add_constant(format!("{name}.beta"), &[width], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta)
    }
}
