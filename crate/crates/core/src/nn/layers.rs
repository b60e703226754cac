use alloc::format;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;
use crate::rng::Rng;

/// `x · W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            weight: store.gaussian(&format!("{name}.w"), inputs, outputs, rng),
            bias: store.constant(&format!("{name}.b"), 1, outputs, 0.0),
            inputs,
            outputs,
        }
    }

    /// Zero-initialised weights, e.g. for residual outputs that should start silent.
    pub fn zeroed(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize) -> Self {
        Self {
            weight: store.constant(&format!("{name}.w"), inputs, outputs, 0.0),
            bias: store.constant(&format!("{name}.b"), 1, outputs, 0.0),
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.constant(&format!("{name}.gain"), 1, dim, 1.0),
            bias: store.constant(&format!("{name}.bias"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let n = g.normalize_rows(x, LAYER_NORM_EPS);
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        let y = g.mul_row(n, gain)?;
        g.add_row(y, bias)
    }
}

/// Two-layer GELU MLP.
#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.up.forward(g, store, x)?;
        let h = g.gelu(h);
        self.down.forward(g, store, h)
    }
}
