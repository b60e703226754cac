//! Objective motion statistics for generated or captured clips.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::fk::JointPositions;
use super::hampel::{detect_speed_anomalies, HampelParams};
use super::rotation;
use super::skeleton::Skeleton;
use crate::error::Result;
use crate::math;

/// Wrist joints by name; falls back to joints named `*hand`, then to every joint.
pub fn wrist_joints(skeleton: &Skeleton) -> Vec<usize> {
    let wrists = skeleton.find_joints(&["wrist"]);
    if !wrists.is_empty() {
        return wrists;
    }
    let hands: Vec<usize> = skeleton
        .joints()
        .iter()
        .enumerate()
        .filter(|(_, j)| j.name.to_lowercase().ends_with("hand"))
        .map(|(i, _)| i)
        .collect();
    if !hands.is_empty() {
        return hands;
    }
    (0..skeleton.len()).collect()
}

/// Joints checked for capture discontinuities: wrists plus hips (or the root).
pub fn tracked_joints(skeleton: &Skeleton) -> Vec<(usize, String)> {
    let mut idx = wrist_joints(skeleton);
    let hips = skeleton.find_joints(&["hip", "pelvis"]);
    if hips.is_empty() {
        idx.push(0);
    } else {
        idx.extend(hips);
    }
    idx.sort_unstable();
    idx.dedup();
    idx.into_iter()
        .map(|i| (i, skeleton.joints()[i].name.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatsParams {
    pub bins: usize,
    /// Histogram bin width in length units per second; the last bin is open-ended.
    pub bin_width: f64,
    pub hampel: HampelParams,
}

impl Default for StatsParams {
    fn default() -> Self {
        Self {
            bins: 10,
            bin_width: 20.0,
            hampel: HampelParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionStats {
    pub frames: usize,
    /// Mean over joints and frames of `‖Δp‖ · fps`.
    pub mean_speed: f64,
    /// Mean over joints and frames of `‖Δ³p‖ · fps³`.
    pub mean_jerk: f64,
    /// Per-frame mean wrist speed binned; frame 0 counts as speed 0.
    pub wrist_histogram: Vec<usize>,
    /// Fraction of frames flagged on wrists and hips; 0 when the clip is
    /// no longer than the Hampel window.
    pub flagged_fraction: f64,
}

fn diff(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn motion_stats(skeleton: &Skeleton, positions: &JointPositions, params: StatsParams) -> Result<MotionStats> {
    let n = positions.num_frames();
    let nj = positions.num_joints;
    let fps = positions.frame_rate;

    let mut speed_sum = 0.0;
    let mut jerk_sum = 0.0;
    for j in 0..nj {
        for t in 1..n {
            speed_sum += rotation::norm(&diff(&positions.at(t, j), &positions.at(t - 1, j)));
        }
        for t in 3..n {
            let (p0, p1, p2, p3) = (
                positions.at(t - 3, j),
                positions.at(t - 2, j),
                positions.at(t - 1, j),
                positions.at(t, j),
            );
            let d3 = [
                p3[0] - 3.0 * p2[0] + 3.0 * p1[0] - p0[0],
                p3[1] - 3.0 * p2[1] + 3.0 * p1[1] - p0[1],
                p3[2] - 3.0 * p2[2] + 3.0 * p1[2] - p0[2],
            ];
            jerk_sum += rotation::norm(&d3);
        }
    }
    let mean_speed = if n > 1 { speed_sum * fps / ((n - 1) * nj) as f64 } else { 0.0 };
    let mean_jerk = if n > 3 {
        jerk_sum * math::powi(fps, 3) / ((n - 3) * nj) as f64
    } else {
        0.0
    };

    let wrists = wrist_joints(skeleton);
    let series: Vec<Vec<f64>> = wrists.iter().map(|&j| positions.speeds(j)).collect();
    let mut wrist_histogram = vec![0usize; params.bins.max(1)];
    for t in 0..n {
        let s = if t == 0 {
            0.0
        } else {
            series.iter().map(|v| v[t - 1]).sum::<f64>() / series.len() as f64
        };
        let last = wrist_histogram.len() - 1;
        let bin = math::floor(s / params.bin_width) as usize;
        wrist_histogram[bin.min(last)] += 1;
    }

    let flagged_fraction = if n > params.hampel.window {
        detect_speed_anomalies(positions, &tracked_joints(skeleton), params.hampel)?.flagged_fraction(n)
    } else {
        0.0
    };

    Ok(MotionStats {
        frames: n,
        mean_speed,
        mean_jerk,
        wrist_histogram,
        flagged_fraction,
    })
}

impl MotionStats {
    /// Tab-separated header matching [`to_row`](Self::to_row).
    pub fn header(bins: usize) -> String {
        let mut h = String::from("file\tframes\tmean_speed\tmean_jerk\tflagged_fraction");
        for b in 0..bins {
            h.push_str("\twrist_bin");
            h.push_str(&b.to_string());
        }
        h
    }

    pub fn to_row(&self, file: &str) -> String {
        let mut row = alloc::format!(
            "{file}\t{}\t{}\t{}\t{}",
            self.frames, self.mean_speed, self.mean_jerk, self.flagged_fraction
        );
        for c in &self.wrist_histogram {
            row.push('\t');
            row.push_str(&c.to_string());
        }
        row
    }
}
