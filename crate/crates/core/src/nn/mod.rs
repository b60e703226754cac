//! Minimal differentiable-computation substrate.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod tensor;
pub mod transformer;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::ModelCheckpoint;
pub use gradcheck::{check_gradients, GradCheckReport};
pub use graph::{Graph, Var};
pub use layers::{FeedForward, LayerNorm, Linear};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
pub use transformer::{TransformerConfig, TransformerStack};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec::Vec;

    fn random_input(g: &mut Graph, rng: &mut Rng, t: usize, d: usize) -> Var {
        g.matrix(t, d, rng.normal_vec(t * d)).unwrap()
    }

    /// Perturb every parameter away from its (often symmetric) initial value.
    fn jitter(store: &mut ParamStore, rng: &mut Rng) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            for v in store.get_mut(id).data_mut() {
                *v += 0.3 * rng.normal();
            }
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = Rng::new(1);
        let mut store = ParamStore::new();
        let l1 = Linear::new(&mut store, "l1", 5, 8, &mut rng);
        let l2 = Linear::new(&mut store, "l2", 8, 8, &mut rng);
        let l3 = Linear::new(&mut store, "l3", 8, 3, &mut rng);
        jitter(&mut store, &mut rng);
        let x: Vec<f64> = rng.normal_vec(4 * 5);
        let target: Vec<f64> = rng.normal_vec(4 * 3);
        let report = check_gradients(&mut store, 1e-4, |g, s| {
            let xi = g.matrix(4, 5, x.clone())?;
            let h = l1.forward(g, s, xi)?;
            let h = g.tanh(h);
            let h = l2.forward(g, s, h)?;
            let h = g.gelu(h);
            let y = l3.forward(g, s, h)?;
            let t = g.matrix(4, 3, target.clone())?;
            let d = g.sub(y, t)?;
            let sq = g.square(d);
            Ok(g.mean(sq))
        })
        .unwrap();
        assert!(report.max_error < 1e-3, "{report:?}");
        assert_eq!(report.checked, store.num_values());
    }

    #[test]
    fn transformer_gradients_match_finite_differences() {
        let mut rng = Rng::new(2);
        let mut store = ParamStore::new();
        let mut cfg = TransformerConfig::new(8, 2, 2, 8);
        cfg.max_dist = 3;
        let stack = TransformerStack::new(&mut store, "enc", cfg, &mut rng).unwrap();
        jitter(&mut store, &mut rng);
        let mut xr = Rng::new(3);
        let x = xr.normal_vec(6 * 8);
        let w = xr.normal_vec(6 * 8);
        let mask = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        let report = check_gradients(&mut store, 1e-4, |g, s| {
            let xi = g.matrix(6, 8, x.clone())?;
            let y = stack.forward(g, s, xi, Some(&mask))?;
            let wi = g.matrix(6, 8, w.clone())?;
            let p = g.mul(y, wi)?;
            Ok(g.sum(p))
        })
        .unwrap();
        assert!(report.max_error < 1e-3, "{report:?}");
    }

    #[test]
    fn attention_rows_sum_to_one_and_layer_norm_standardises() {
        let mut rng = Rng::new(4);
        let mut store = ParamStore::new();
        let stack = TransformerStack::new(&mut store, "enc", TransformerConfig::new(16, 4, 2, 32), &mut rng).unwrap();
        jitter(&mut store, &mut rng);
        let mut g = Graph::new();
        let x = random_input(&mut g, &mut rng, 10, 16);
        let (_, probs) = stack.forward_with_attention(&mut g, &store, x, None).unwrap();
        assert_eq!(probs.len(), 8);
        for p in probs {
            for r in 0..10 {
                let s: f64 = g.value(p).row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-6);
            }
        }
        let n = g.normalize_rows(x, layers::LAYER_NORM_EPS);
        for r in 0..10 {
            let row = g.value(n).row(r);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn single_frame_and_constant_rows() {
        let mut rng = Rng::new(5);
        let mut store = ParamStore::new();
        let stack = TransformerStack::new(&mut store, "enc", TransformerConfig::new(8, 2, 1, 16), &mut rng).unwrap();
        jitter(&mut store, &mut rng);
        let mut g = Graph::new();
        let x = random_input(&mut g, &mut rng, 1, 8);
        let (_, probs) = stack.forward_with_attention(&mut g, &store, x, None).unwrap();
        assert_eq!(g.value(probs[0]).data(), &[1.0]);

        let row = rng.normal_vec(8);
        let x = g.matrix(5, 8, row.repeat(5)).unwrap();
        let y = stack.forward(&mut g, &store, x, None).unwrap();
        let out = g.value(y);
        for r in 1..5 {
            for (a, b) in out.row(r).iter().zip(out.row(0)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_shift_shifts_output() {
        // k hidden frames in front of the sequence move it k frames later in time
        let mut rng = Rng::new(7);
        let mut store = ParamStore::new();
        let mut cfg = TransformerConfig::new(8, 2, 2, 32);
        cfg.max_dist = 4;
        let stack = TransformerStack::new(&mut store, "enc", cfg, &mut rng).unwrap();
        jitter(&mut store, &mut rng);
        let (t, k) = (9, 5);
        let x = rng.normal_vec(t * 8);
        let mut g = Graph::new();
        let xi = g.matrix(t, 8, x.clone()).unwrap();
        let y = stack.forward(&mut g, &store, xi, None).unwrap();
        let mut shifted = rng.normal_vec(k * 8);
        shifted.extend_from_slice(&x);
        let mut mask = alloc::vec![0.0; k];
        mask.extend(core::iter::repeat_n(1.0, t));
        let xs = g.matrix(t + k, 8, shifted).unwrap();
        let ys = stack.forward(&mut g, &store, xs, Some(&mask)).unwrap();
        for r in 0..t {
            for (a, b) in g.value(y).row(r).iter().zip(g.value(ys).row(r + k)) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn context_limit_enforced() {
        let mut rng = Rng::new(6);
        let mut store = ParamStore::new();
        let stack = TransformerStack::new(&mut store, "enc", TransformerConfig::new(4, 1, 1, 3), &mut rng).unwrap();
        let mut g = Graph::new();
        let x = random_input(&mut g, &mut rng, 4, 4);
        assert!(matches!(
            stack.forward(&mut g, &store, x, None),
            Err(crate::Error::ContextOverflow { len: 4, limit: 3 })
        ));
        assert!(TransformerStack::new(&mut store, "bad", TransformerConfig::new(6, 4, 1, 3), &mut rng).is_err());
    }
}
