//! Pre-norm transformer encoder whose attention sees positions only through
//! a learned bias on the clipped relative offset `i − j`. Shifting the input
//! in time shifts the output identically.

use alloc::format;
use alloc::vec::Vec;

use super::graph::{Graph, Var};
use super::layers::{FeedForward, LayerNorm, Linear};
use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

/// Added to attention logits of padded keys.
const MASKED_LOGIT: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerConfig {
    pub dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_hidden: usize,
    pub max_dist: usize,
    /// Longest accepted sequence.
    pub context: usize,
}

impl TransformerConfig {
    pub fn new(dim: usize, heads: usize, layers: usize, context: usize) -> Self {
        Self {
            dim,
            heads,
            layers,
            ff_hidden: 4 * dim,
            max_dist: 64,
            context,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub norm_attn: LayerNorm,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    /// `heads × (2·max_dist + 1)`
    pub rel_bias: ParamId,
    pub norm_ff: LayerNorm,
    pub ff: FeedForward,
}

#[derive(Debug, Clone)]
pub struct TransformerStack {
    pub config: TransformerConfig,
    pub layers: Vec<TransformerLayer>,
    pub final_norm: LayerNorm,
}

impl TransformerStack {
    pub fn new(store: &mut ParamStore, name: &str, config: TransformerConfig, rng: &mut Rng) -> Result<Self> {
        if config.heads == 0 || !config.dim.is_multiple_of(config.heads) {
            return Err(Error::InvalidArgument(format!(
                "model dim {} not divisible by {} heads",
                config.dim, config.heads
            )));
        }
        let d = config.dim;
        let layers = (0..config.layers)
            .map(|i| {
                let p = format!("{name}.layer{i}");
                TransformerLayer {
                    norm_attn: LayerNorm::new(store, &format!("{p}.norm_attn"), d),
                    query: Linear::new(store, &format!("{p}.attn.query"), d, d, rng),
                    key: Linear::new(store, &format!("{p}.attn.key"), d, d, rng),
                    value: Linear::new(store, &format!("{p}.attn.value"), d, d, rng),
                    out: Linear::new(store, &format!("{p}.attn.out"), d, d, rng),
                    rel_bias: store.constant(
                        &format!("{p}.attn.rel_bias"),
                        config.heads,
                        2 * config.max_dist + 1,
                        0.0,
                    ),
                    norm_ff: LayerNorm::new(store, &format!("{p}.norm_ff"), d),
                    ff: FeedForward::new(store, &format!("{p}.ff"), d, config.ff_hidden, rng),
                }
            })
            .collect();
        Ok(Self {
            config,
            layers,
            final_norm: LayerNorm::new(store, &format!("{name}.final_norm"), d),
        })
    }

    /// `x: T × dim`. `key_mask[t] = 0` hides frame `t` from every query.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        key_mask: Option<&[f64]>,
    ) -> Result<Var> {
        self.forward_inner(g, store, x, key_mask, None)
    }

    /// Same as [`forward`](Self::forward), also returning every attention
    /// probability matrix (layer-major, then head).
    pub fn forward_with_attention(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        key_mask: Option<&[f64]>,
    ) -> Result<(Var, Vec<Var>)> {
        let mut probs = Vec::new();
        let y = self.forward_inner(g, store, x, key_mask, Some(&mut probs))?;
        Ok((y, probs))
    }

    fn forward_inner(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        key_mask: Option<&[f64]>,
        mut probs: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let shape = g.value(x).shape().to_vec();
        let (t, d) = (shape[0], shape[1]);
        if d != self.config.dim {
            return Err(Error::Shape(format!(
                "transformer input has {d} features, expected {}",
                self.config.dim
            )));
        }
        if t > self.config.context {
            return Err(Error::ContextOverflow {
                len: t,
                limit: self.config.context,
            });
        }
        let mask = match key_mask {
            Some(m) if m.len() != t => {
                return Err(Error::Shape(format!("{} mask entries for {t} frames", m.len())))
            }
            Some(m) if m.contains(&0.0) => {
                let row: Vec<f64> = m
                    .iter()
                    .map(|v| if *v == 0.0 { MASKED_LOGIT } else { 0.0 })
                    .collect();
                Some(g.matrix(1, t, row)?)
            }
            _ => None,
        };
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = 1.0 / math::sqrt(dh as f64);
        let mut h = x;
        for layer in &self.layers {
            let n = layer.norm_attn.forward(g, store, h)?;
            let q = layer.query.forward(g, store, n)?;
            let k = layer.key.forward(g, store, n)?;
            let v = layer.value.forward(g, store, n)?;
            let table = g.param(store, layer.rel_bias);
            let mut outs = Vec::with_capacity(heads);
            for head in 0..heads {
                let qh = g.slice_cols(q, head * dh, dh)?;
                let kh = g.slice_cols(k, head * dh, dh)?;
                let vh = g.slice_cols(v, head * dh, dh)?;
                let logits = g.matmul_bt(qh, kh)?;
                let logits = g.scale(logits, scale);
                let bias = g.relative_bias(table, head, self.config.max_dist, t)?;
                let mut logits = g.add(logits, bias)?;
                if let Some(m) = mask {
                    logits = g.add_row(logits, m)?;
                }
                let a = g.softmax(logits);
                if let Some(p) = probs.as_deref_mut() {
                    p.push(a);
                }
                outs.push(g.matmul(a, vh)?);
            }
            let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
            let attn = layer.out.forward(g, store, cat)?;
            h = g.add(h, attn)?;
            let n = layer.norm_ff.forward(g, store, h)?;
            let f = layer.ff.forward(g, store, n)?;
            h = g.add(h, f)?;
        }
        self.final_norm.forward(g, store, h)
    }
}
