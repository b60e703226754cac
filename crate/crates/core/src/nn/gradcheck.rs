//! Central finite-difference check of reverse-mode gradients.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(1, |analytic|)`.
    pub max_error: f64,
    pub worst: Option<(ParamId, usize)>,
    pub checked: usize,
}

/// Compare `backward` against `(f(p + h) − f(p − h)) / 2h` for every parameter
/// entry. `build` must construct a scalar from the store.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = build(&mut g, store)?;
    let analytic = g.backward(out, store)?;
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = build(&mut g, store)?;
        Ok(g.value(out).item())
    };
    let mut report = GradCheckReport {
        max_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: alloc::vec::Vec<ParamId> = store.ids().collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            store.get_mut(id).data_mut()[k] = orig + h;
            let up = eval(store)?;
            store.get_mut(id).data_mut()[k] = orig - h;
            let down = eval(store)?;
            store.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(id).data()[k];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            report.checked += 1;
            if err > report.max_error {
                report.max_error = err;
                report.worst = Some((id, k));
            }
        }
    }
    Ok(report)
}
