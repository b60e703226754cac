//! Rational-rate polyphase resampling with a Kaiser-windowed sinc low-pass.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

pub const KAISER_BETA: f64 = 5.0;

/// Upsample by `up`, low-pass, downsample by `down`.
///
/// Output sample `m` sits at input time `m · down / up`, so the filter's
/// group delay is already compensated. Near the signal ends each output is
/// normalised by the filter mass that falls on real input samples, which
/// keeps the DC gain at exactly one everywhere.
#[derive(Debug, Clone)]
pub struct PolyphaseResampler {
    up: usize,
    down: usize,
    half: usize,
    /// Centred prototype filter, index `k + half` for offset `k`.
    taps: Vec<f64>,
}

impl PolyphaseResampler {
    pub fn new(rate_in: u64, rate_out: u64) -> Result<Self> {
        if rate_in == 0 || rate_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "rates must be positive ({rate_in} → {rate_out})"
            )));
        }
        let g = math::gcd(rate_in, rate_out);
        Ok(Self::with_ratio((rate_out / g) as usize, (rate_in / g) as usize))
    }

    /// Ratio in lowest terms.
    pub fn with_ratio(up: usize, down: usize) -> Self {
        let max = up.max(down);
        let half = 10 * max;
        let cutoff = 1.0 / max as f64;
        let i0b = math::bessel_i0(KAISER_BETA);
        let taps = (0..=2 * half)
            .map(|i| {
                let k = i as f64 - half as f64;
                let r = k / half as f64;
                let w = math::bessel_i0(KAISER_BETA * math::sqrt((1.0 - r * r).max(0.0))) / i0b;
                let x = core::f64::consts::PI * cutoff * k;
                let sinc = if k == 0.0 { 1.0 } else { math::sin(x) / x };
                up as f64 * cutoff * sinc * w
            })
            .collect();
        Self {
            up,
            down,
            half,
            taps,
        }
    }

    pub fn ratio(&self) -> (usize, usize) {
        (self.up, self.down)
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    /// `(first input index, weights)` for output sample `m`.
    fn weights(&self, m: usize, n: usize) -> (usize, Vec<f64>) {
        let centre = (m * self.down) as i64;
        let (up, half) = (self.up as i64, self.half as i64);
        let lo = ((centre - half).max(0) + up - 1) / up;
        let hi = ((centre + half) / up).min(n as i64 - 1);
        let mut w: Vec<f64> = (lo..=hi)
            .map(|k| self.taps[(centre - k * up + half) as usize])
            .collect();
        let mass: f64 = w.iter().sum();
        for v in w.iter_mut() {
            *v /= mass;
        }
        (lo as usize, w)
    }

    pub fn process(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.is_empty() {
            return Err(Error::Empty("resampler input"));
        }
        if self.up == 1 && self.down == 1 {
            return Ok(x.to_vec());
        }
        Ok((0..self.output_len(x.len()))
            .map(|m| {
                let (lo, w) = self.weights(m, x.len());
                w.iter().zip(&x[lo..]).map(|(a, b)| a * b).sum()
            })
            .collect())
    }

    /// Resample each column of a row-major `rows × cols` matrix independently.
    pub fn process_columns(&self, data: &[f64], rows: usize, cols: usize) -> Result<Vec<f64>> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("resampler input"));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        if self.up == 1 && self.down == 1 {
            return Ok(data.to_vec());
        }
        let out_rows = self.output_len(rows);
        let mut out = Vec::with_capacity(out_rows * cols);
        let mut acc = alloc::vec![0.0; cols];
        for m in 0..out_rows {
            let (lo, w) = self.weights(m, rows);
            acc.iter_mut().for_each(|a| *a = 0.0);
            for (i, wk) in w.iter().enumerate() {
                let row = &data[(lo + i) * cols..(lo + i + 1) * cols];
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += wk * v;
                }
            }
            out.extend_from_slice(&acc);
        }
        Ok(out)
    }
}

/// Resample `x` from `rate_in` to `rate_out`.
pub fn resample_polyphase(x: &[f64], rate_in: u64, rate_out: u64) -> Result<Vec<f64>> {
    PolyphaseResampler::new(rate_in, rate_out)?.process(x)
}
