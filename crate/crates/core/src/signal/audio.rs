//! Speech-track repair: DC-offset removal and transcript-gated muting.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Mono audio in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrack {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioTrack {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio sample {i}")));
        }
        Ok(Self {
            sample_rate,
            samples,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Sorted, merged speech spans in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeechIntervals {
    spans: Vec<(f64, f64)>,
}

impl SpeechIntervals {
    /// Validates `start < end`, then sorts and merges overlapping spans.
    pub fn new(mut spans: Vec<(f64, f64)>) -> Result<Self> {
        for &(s, e) in &spans {
            if !(s.is_finite() && e.is_finite() && s < e) {
                return Err(Error::InvalidArgument(format!(
                    "speech interval [{s}, {e}] must satisfy start < end"
                )));
            }
        }
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
        for (s, e) in spans {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        Ok(Self { spans: merged })
    }

    pub fn spans(&self) -> &[(f64, f64)] {
        &self.spans
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampShape {
    #[default]
    Linear,
    RaisedCosine,
}

impl RampShape {
    fn shape(self, x: f64) -> f64 {
        match self {
            RampShape::Linear => x,
            RampShape::RaisedCosine => 0.5 - 0.5 * crate::math::cos(core::f64::consts::PI * x),
        }
    }
}

/// Subtract the mean of the samples with `|x| > zero_eps` from those samples.
/// Samples at or below `zero_eps` are left untouched.
pub fn remove_dc(audio: &AudioTrack, zero_eps: f64) -> AudioTrack {
    let live = |x: f64| x.abs() > zero_eps;
    let (sum, count) = audio
        .samples
        .iter()
        .filter(|x| live(**x))
        .fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        return audio.clone();
    }
    let mean = sum / count as f64;
    AudioTrack {
        sample_rate: audio.sample_rate,
        samples: audio
            .samples
            .iter()
            .map(|&x| if live(x) { x - mean } else { x })
            .collect(),
    }
}

/// Gain of the muting envelope at time `t` seconds: 1 inside a span, ramping
/// to 0 over `ramp` seconds on either side, pointwise maximum across spans.
pub fn mute_gain(speech: &SpeechIntervals, ramp: f64, shape: RampShape, t: f64) -> f64 {
    let mut g: f64 = 0.0;
    for &(s, e) in speech.spans() {
        let v = if t >= s && t <= e {
            1.0
        } else if ramp > 0.0 && t < s && t > s - ramp {
            shape.shape((t - (s - ramp)) / ramp)
        } else if ramp > 0.0 && t > e && t < e + ramp {
            shape.shape(((e + ramp) - t) / ramp)
        } else {
            0.0
        };
        g = g.max(v);
        if g >= 1.0 {
            break;
        }
    }
    g
}

/// Zero everything outside the speech spans, with ramps of `ramp` seconds.
pub fn mute_crosstalk(
    audio: &AudioTrack,
    speech: &SpeechIntervals,
    ramp: f64,
    shape: RampShape,
) -> Result<AudioTrack> {
    if !(ramp >= 0.0) {
        return Err(Error::InvalidArgument(format!("ramp {ramp} s must be non-negative")));
    }
    let dur = audio.duration();
    let clipped: Vec<(f64, f64)> = speech
        .spans()
        .iter()
        .map(|&(s, e)| (s.max(0.0), e.min(dur)))
        .filter(|(s, e)| s < e)
        .collect();
    let clipped = SpeechIntervals { spans: clipped };
    let sr = audio.sample_rate as f64;
    Ok(AudioTrack {
        sample_rate: audio.sample_rate,
        samples: audio
            .samples
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let g = mute_gain(&clipped, ramp, shape, i as f64 / sr);
                if g >= 1.0 {
                    x
                } else {
                    x * g
                }
            })
            .collect(),
    })
}
