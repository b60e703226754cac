use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::schedule::NoiseSchedule;
use crate::csmp::chunk_windows;
use crate::error::{Error, Result};
use crate::math;
use crate::rng::Rng;

/// Noise predictor `ε_θ(x_n, n, c)` over a `frames × dim` sequence.
/// `cond = None` requests the unconditioned prediction.
pub trait EpsilonModel {
    fn dim(&self) -> usize;
    fn cond_dim(&self) -> usize;
    /// Longest sequence one call accepts.
    fn max_frames(&self) -> usize;
    fn predict(&self, x: &[f64], frames: usize, step: usize, cond: Option<&[f64]>) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceParams {
    pub gamma: f64,
    pub p_drop: f64,
}

impl Default for GuidanceParams {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            p_drop: 0.1,
        }
    }
}

impl GuidanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "guidance scale {} must be finite and non-negative",
                self.gamma
            )));
        }
        if !(0.0..1.0).contains(&self.p_drop) {
            return Err(Error::InvalidArgument(format!(
                "conditioning dropout {} outside [0, 1)",
                self.p_drop
            )));
        }
        Ok(())
    }
}

/// `ε_c + γ·(ε_c − ε_u)`.
pub fn guide(eps_cond: &[f64], eps_uncond: &[f64], gamma: f64) -> Vec<f64> {
    eps_cond
        .iter()
        .zip(eps_uncond)
        .map(|(c, u)| c + gamma * (c - u))
        .collect()
}

/// Classifier-free guided noise estimate from one model.
pub fn guided_epsilon<M: EpsilonModel + ?Sized>(
    model: &M,
    x: &[f64],
    frames: usize,
    step: usize,
    cond: &[f64],
    gamma: f64,
) -> Result<Vec<f64>> {
    let c = model.predict(x, frames, step, Some(cond))?;
    if gamma == 0.0 {
        return Ok(c);
    }
    let u = model.predict(x, frames, step, None)?;
    Ok(guide(&c, &u, gamma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOptions {
    pub gamma: f64,
    pub seed: u64,
    /// Overlap between consecutive windows when the sequence exceeds the model's length.
    pub crossfade: usize,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            seed: 0,
            crossfade: 30,
        }
    }
}

/// Guided ε̄ over a sequence of any length: overlapping windows whose
/// predictions are blended with linear cross-fade weights.
fn windowed_epsilon<M: EpsilonModel + ?Sized>(
    model: &M,
    x: &[f64],
    frames: usize,
    step: usize,
    cond: &[f64],
    opts: &SampleOptions,
) -> Result<Vec<f64>> {
    let limit = model.max_frames();
    if frames <= limit {
        return guided_epsilon(model, x, frames, step, cond, opts.gamma);
    }
    let (d, c) = (model.dim(), model.cond_dim());
    let overlap = opts.crossfade.min(limit / 2);
    let windows = chunk_windows(frames, limit, limit - overlap);
    let mut acc = vec![0.0; frames * d];
    let mut weight = vec![0.0; frames];
    for (k, w) in windows.iter().enumerate() {
        let xs = &x[w.start * d..(w.start + w.len) * d];
        let cs = &cond[w.start * c..(w.start + w.len) * c];
        let eps = guided_epsilon(model, xs, w.len, step, cs, opts.gamma)?;
        for r in 0..w.len {
            let mut wt = 1.0;
            if k > 0 && r < overlap {
                wt = (r + 1) as f64 / (overlap + 1) as f64;
            }
            if k + 1 < windows.len() && w.len - r <= overlap {
                wt = wt.min((w.len - r) as f64 / (overlap + 1) as f64);
            }
            let f = w.start + r;
            weight[f] += wt;
            for j in 0..d {
                acc[f * d + j] += wt * eps[r * d + j];
            }
        }
    }
    for f in 0..frames {
        for v in &mut acc[f * d..(f + 1) * d] {
            *v /= weight[f];
        }
    }
    Ok(acc)
}

/// Ancestral sampling from `x_N ~ N(0, I)` with posterior variance `β̃_n`
/// and no noise on the final step. Returns `frames × dim` in model space.
pub fn sample<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    cond: &[f64],
    frames: usize,
    opts: &SampleOptions,
) -> Result<Vec<f64>> {
    if frames == 0 {
        return Err(Error::Empty("conditioning sequence"));
    }
    if cond.len() != frames * model.cond_dim() {
        return Err(Error::Shape(format!(
            "conditioning has {} values, expected {frames} × {}",
            cond.len(),
            model.cond_dim()
        )));
    }
    GuidanceParams {
        gamma: opts.gamma,
        p_drop: 0.0,
    }
    .validate()?;
    let mut rng = Rng::new(opts.seed);
    let mut x = rng.normal_vec(frames * model.dim());
    for n in (1..=schedule.steps()).rev() {
        let eps = windowed_epsilon(model, &x, frames, n, cond, opts)?;
        let a = schedule.alpha(n);
        let coef = schedule.beta(n) / math::sqrt(1.0 - schedule.alpha_bar(n));
        let inv = 1.0 / math::sqrt(a);
        let sigma = math::sqrt(schedule.posterior_variance(n));
        for (xi, e) in x.iter_mut().zip(&eps) {
            *xi = inv * (*xi - coef * e);
        }
        if n > 1 {
            for xi in x.iter_mut() {
                *xi += sigma * rng.normal();
            }
        }
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value {i}")));
    }
    Ok(x)
}

/// Mean squared error between `noise` and the model's prediction at `x_n`.
pub fn denoising_loss<M: EpsilonModel + ?Sized>(
    model: &M,
    schedule: &NoiseSchedule,
    x0: &[f64],
    frames: usize,
    step: usize,
    noise: &[f64],
    cond: Option<&[f64]>,
) -> Result<f64> {
    let xn = schedule.forward_sample(x0, step, noise)?;
    let eps = model.predict(&xn, frames, step, cond)?;
    Ok(noise
        .iter()
        .zip(&eps)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / noise.len() as f64)
}
