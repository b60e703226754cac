//! Rolling median/MAD detection of joint-speed discontinuities.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::fk::JointPositions;
use crate::error::{Error, Result};

/// MAD → σ for Gaussian data.
pub const MAD_SCALE: f64 = 1.4826;
/// Lower bound on the MAD, so a spike in an otherwise constant window still flags.
pub const MAD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HampelParams {
    /// Odd window length in frames.
    pub window: usize,
    /// Multiple of the scaled MAD.
    pub threshold: f64,
}

impl Default for HampelParams {
    fn default() -> Self {
        Self {
            window: 15,
            threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyEntry {
    pub frame: usize,
    pub joint: String,
    pub speed: f64,
    pub median: f64,
    /// `|speed − median| / (1.4826 · MAD)`.
    pub score: f64,
}

/// Flags sorted by frame, then by joint order of the query.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnomalyReport {
    pub entries: Vec<AnomalyEntry>,
}

impl AnomalyReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct flagged frame indices, ascending.
    pub fn flagged_frames(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.entries.iter().map(|e| e.frame).collect();
        f.dedup();
        f
    }

    pub fn flagged_fraction(&self, num_frames: usize) -> f64 {
        if num_frames == 0 {
            return 0.0;
        }
        self.flagged_frames().len() as f64 / num_frames as f64
    }
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Hampel test on the speed series of each listed joint.
///
/// Frame `t ≥ 1` is flagged for joint `j` when its speed deviates from the
/// median of the centred window by more than `threshold · 1.4826 · MAD`.
/// Windows are truncated at the sequence ends.
pub fn detect_speed_anomalies(
    positions: &JointPositions,
    joints: &[(usize, String)],
    params: HampelParams,
) -> Result<AnomalyReport> {
    let n = positions.num_frames();
    if params.window.is_multiple_of(2) {
        return Err(Error::Window(format!(
            "Hampel window {} must be odd",
            params.window
        )));
    }
    if params.window >= n {
        return Err(Error::Window(format!(
            "Hampel window {} must be shorter than the {n}-frame sequence",
            params.window
        )));
    }
    let half = params.window / 2;
    let mut per_frame: Vec<Vec<AnomalyEntry>> = (0..n).map(|_| Vec::new()).collect();
    let mut scratch = Vec::with_capacity(params.window);
    for (j, name) in joints {
        let speeds = positions.speeds(*j);
        let m = speeds.len();
        for i in 0..m {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(m);
            scratch.clear();
            scratch.extend_from_slice(&speeds[lo..hi]);
            let med = median(&mut scratch);
            for v in scratch.iter_mut() {
                *v = (*v - med).abs();
            }
            let mad = median(&mut scratch).max(MAD_FLOOR);
            let sigma = MAD_SCALE * mad;
            let dev = (speeds[i] - med).abs();
            if dev > params.threshold * sigma {
                per_frame[i + 1].push(AnomalyEntry {
                    frame: i + 1,
                    joint: name.clone(),
                    speed: speeds[i],
                    median: med,
                    score: dev / sigma,
                });
            }
        }
    }
    Ok(AnomalyReport {
        entries: per_frame.into_iter().flatten().collect(),
    })
}
