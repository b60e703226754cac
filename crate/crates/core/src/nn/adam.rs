//! Adaptive-moment optimiser with bias correction.

use alloc::format;
use alloc::vec::Vec;

use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub step: u64,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    /// Keep parameters and moments representable in `f32`, so a checkpoint
    /// written mid-run restores the exact optimiser state.
    pub f32_state: bool,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .ids()
                .map(|id| Tensor::zeros(store.get(id).shape()))
                .collect()
        };
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
            f32_state: false,
        }
    }

    /// Apply one update. A non-finite gradient rejects the whole step and
    /// leaves parameters and moments untouched.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if let Some((id, k)) = grads.first_non_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of `{}` at offset {k}; step {} rejected",
                store.name(id),
                self.step + 1
            )));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - math::powi(beta1, self.step as i32);
        let bc2 = 1.0 - math::powi(beta2, self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = grads.get(id).data();
            let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * g[i];
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * g[i] * g[i];
                let (mi, vi) = if self.f32_state {
                    (mi as f32 as f64, vi as f32 as f64)
                } else {
                    (mi, vi)
                };
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                let np = p[i] - lr * mhat / (math::sqrt(vhat) + eps);
                p[i] = if self.f32_state { np as f32 as f64 } else { np };
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::graph::Graph;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::matrix(1, values.len(), values.to_vec()).unwrap());
        s
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = store_with(&[1.0, -2.0]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        let zero = Gradients::zeros_like(&s);
        opt.update(&mut s, &zero).unwrap();
        assert_eq!(s.get(s.id("w").unwrap()).data(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = store_with(&[1.0, -2.0]);
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(s.id("w").unwrap(), &[0.3, -5.0]);
        let mut opt = Adam::new(AdamConfig { lr: 0.01, ..Default::default() }, &s);
        opt.update(&mut s, &g).unwrap();
        let p = s.get(s.id("w").unwrap()).data();
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-7);
        assert!((p[1] - (-2.0 + 0.01)).abs() < 1e-7);
    }

    #[test]
    fn nan_gradient_rejected() {
        let mut s = store_with(&[1.0]);
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(s.id("w").unwrap(), &[f64::NAN]);
        let mut opt = Adam::new(AdamConfig::default(), &s);
        assert!(matches!(opt.update(&mut s, &g), Err(Error::NonFinite(_))));
        assert_eq!(opt.step, 0);
        assert_eq!(s.get(s.id("w").unwrap()).data(), &[1.0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let target = [3.0, -1.5, 0.25];
        let mut s = store_with(&[0.0, 0.0, 0.0]);
        let id = s.id("w").unwrap();
        let mut opt = Adam::new(AdamConfig { lr: 1e-2, ..Default::default() }, &s);
        let mut loss = f64::INFINITY;
        for _ in 0..2000 {
            let mut g = Graph::new();
            let w = g.param(&s, id);
            let t = g.matrix(1, 3, target.to_vec()).unwrap();
            let d = g.sub(w, t).unwrap();
            let sq = g.square(d);
            let l = g.sum(sq);
            loss = g.value(l).item();
            if loss < 1e-6 {
                break;
            }
            let grads = g.backward(l, &s).unwrap();
            opt.update(&mut s, &grads).unwrap();
        }
        assert!(loss < 1e-6, "loss {loss}");
    }
}
