use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScheduleKind {
    #[default]
    Linear,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Linear => "linear",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(ScheduleKind::Linear),
            _ => None,
        }
    }
}

/// Fixed per-step noise variances `β_1..β_N` and the derived products.
/// Steps are 1-based throughout; index `n − 1` into the vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(kind: ScheduleKind, steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < β_1 ≤ β_N < 1, got {beta_start}, {beta_end}"
            )));
        }
        let beta: Vec<f64> = match kind {
            ScheduleKind::Linear if steps == 1 => alloc::vec![beta_start],
            ScheduleKind::Linear => (0..steps)
                .map(|i| {
                    let t = i as f64 / (steps - 1) as f64;
                    (1.0 - t) * beta_start + t * beta_end
                })
                .collect(),
        };
        Self::from_betas(kind, beta)
    }

    pub fn from_betas(kind: ScheduleKind, beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::InvalidArgument("schedule needs at least one step".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::InvalidArgument(format!("β = {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for b in &beta {
            acc *= 1.0 - b;
            alpha_bar.push(acc);
        }
        Ok(Self {
            kind,
            beta,
            alpha_bar,
        })
    }

    /// 1000 steps, β from 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        Self::new(ScheduleKind::Linear, 1000, 1e-4, 0.02).expect("valid default schedule")
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    fn check(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.steps() {
            return Err(Error::StepOutOfRange {
                step: n,
                max: self.steps(),
            });
        }
        Ok(n - 1)
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.beta[n - 1]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        1.0 - self.beta[n - 1]
    }

    /// `ᾱ_n`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, n: usize) -> f64 {
        if n == 0 {
            1.0
        } else {
            self.alpha_bar[n - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Posterior variance `β̃_n = (1 − ᾱ_{n−1}) / (1 − ᾱ_n) · β_n`.
    pub fn posterior_variance(&self, n: usize) -> f64 {
        (1.0 - self.alpha_bar(n - 1)) / (1.0 - self.alpha_bar(n)) * self.beta(n)
    }

    /// `x_n = √ᾱ_n · x0 + √(1 − ᾱ_n) · ε`.
    pub fn forward_sample(&self, x0: &[f64], n: usize, noise: &[f64]) -> Result<Vec<f64>> {
        let i = self.check(n)?;
        if x0.len() != noise.len() {
            return Err(Error::Shape(format!(
                "x0 has {} values, noise {}",
                x0.len(),
                noise.len()
            )));
        }
        let a = math::sqrt(self.alpha_bar[i]);
        let s = math::sqrt(1.0 - self.alpha_bar[i]);
        Ok(x0.iter().zip(noise).map(|(x, e)| a * x + s * e).collect())
    }

    /// One forward chain step `x_n = √(1 − β_n) · x_{n−1} + √β_n · ε`.
    pub fn forward_step(&self, prev: &[f64], n: usize, noise: &[f64]) -> Result<Vec<f64>> {
        let i = self.check(n)?;
        let a = math::sqrt(1.0 - self.beta[i]);
        let s = math::sqrt(self.beta[i]);
        Ok(prev.iter().zip(noise).map(|(x, e)| a * x + s * e).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;

    #[test]
    fn examples() {
        let s = NoiseSchedule::from_betas(ScheduleKind::Linear, vec![0.5, 0.5]).unwrap();
        assert_eq!(s.alpha_bars(), &[0.5, 0.25]);
        let one = NoiseSchedule::new(ScheduleKind::Linear, 1, 0.1, 0.1).unwrap();
        assert_eq!(one.alpha_bars(), &[0.9]);
        assert!(NoiseSchedule::new(ScheduleKind::Linear, 10, 0.2, 0.1).is_err());
        assert!(NoiseSchedule::new(ScheduleKind::Linear, 10, 0.0, 0.1).is_err());
        assert!(NoiseSchedule::new(ScheduleKind::Linear, 0, 0.1, 0.1).is_err());
        assert!(NoiseSchedule::new(ScheduleKind::Linear, 10, 0.1, 1.0).is_err());
    }

    #[test]
    fn default_terminal_alpha_bar() {
        // independent oracle: product in log space
        let log: f64 = (0..1000)
            .map(|i| {
                let b = 1e-4 + (0.02 - 1e-4) * i as f64 / 999.0;
                libm::log(1.0 - b)
            })
            .sum();
        let s = NoiseSchedule::default_linear();
        let last = s.alpha_bar(1000);
        assert!((last - libm::exp(log)).abs() < 1e-15);
        assert!((last - 4.04e-5).abs() < 0.01e-5, "{last}");
    }

    #[test]
    fn monotone_and_exact_recurrence() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 50, 1e-3, 0.2).unwrap();
        for n in 1..=50 {
            assert_eq!(s.alpha_bar(n), s.alpha_bar(n - 1) * s.alpha(n));
            assert!(s.alpha_bar(n) < s.alpha_bar(n - 1));
        }
        assert_eq!(s.posterior_variance(1), 0.0);
    }

    #[test]
    fn zero_noise_scales() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 10, 1e-3, 0.1).unwrap();
        let x = s.forward_sample(&[2.0, -1.0], 4, &[0.0, 0.0]).unwrap();
        let a = libm::sqrt(s.alpha_bar(4));
        assert_eq!(x, vec![2.0 * a, -a]);
        assert!(matches!(
            s.forward_sample(&[1.0], 11, &[0.0]),
            Err(Error::StepOutOfRange { step: 11, max: 10 })
        ));
        assert!(s.forward_sample(&[1.0], 0, &[0.0]).is_err());
    }

    #[test]
    fn monte_carlo_moments() {
        let s = NoiseSchedule::new(ScheduleKind::Linear, 50, 1e-3, 0.2).unwrap();
        let mut rng = Rng::new(11);
        let m = 10_000;
        let x0 = [1.5, -0.5];
        for n in [1, 10, 50] {
            let draws: Vec<Vec<f64>> = (0..m)
                .map(|_| s.forward_sample(&x0, n, &rng.normal_vec(2)).unwrap())
                .collect();
            for c in 0..2 {
                let mean = draws.iter().map(|d| d[c]).sum::<f64>() / m as f64;
                let var = draws.iter().map(|d| (d[c] - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
                let want_var = 1.0 - s.alpha_bar(n);
                let sigma = libm::sqrt(want_var);
                assert!((mean - libm::sqrt(s.alpha_bar(n)) * x0[c]).abs() < 4.0 * sigma / 100.0);
                assert!((var / want_var - 1.0).abs() < 0.05);
            }
        }
    }
}
