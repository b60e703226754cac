//! Exponential-map pose features relative to a reference pose.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::rotation::{self, Mat3, Vec3};
use super::skeleton::{RotationFrames, Skeleton};
use crate::error::{Error, Result};

/// Reference rotation per joint. Defaults to identity on every joint.
#[derive(Debug, Clone, PartialEq)]
pub struct TPose(pub Vec<Mat3>);

impl TPose {
    pub fn identity(joints: usize) -> Self {
        Self(vec![rotation::IDENTITY; joints])
    }

    /// Reference taken from one frame of a motion.
    pub fn from_frame(frames: &RotationFrames, t: usize) -> Self {
        let j = frames.skeleton.len();
        Self(frames.rotations[t * j..(t + 1) * j].to_vec())
    }
}

/// `frames × D` matrix of expmap coordinates, `D = 3·J` plus three root
/// translation columns at the end when enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    pub skeleton: Skeleton,
    pub frame_rate: f64,
    pub root_translation: bool,
    num_frames: usize,
    data: Vec<f64>,
}

impl PoseSequence {
    pub fn new(
        skeleton: Skeleton,
        frame_rate: f64,
        root_translation: bool,
        data: Vec<f64>,
    ) -> Result<Self> {
        let dim = Self::dim_for(&skeleton, root_translation);
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::Shape(format!(
                "{} values do not form frames of dimension {dim}",
                data.len()
            )));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("frame rate {frame_rate}")));
        }
        Ok(Self {
            num_frames: data.len() / dim,
            skeleton,
            frame_rate,
            root_translation,
            data,
        })
    }

    pub fn dim_for(skeleton: &Skeleton, root_translation: bool) -> usize {
        3 * skeleton.len() + if root_translation { 3 } else { 0 }
    }

    pub fn dim(&self) -> usize {
        Self::dim_for(&self.skeleton, self.root_translation)
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let d = self.dim();
        &self.data[t * d..(t + 1) * d]
    }

    pub fn joint_expmap(&self, t: usize, j: usize) -> Vec3 {
        let f = self.frame(t);
        [f[3 * j], f[3 * j + 1], f[3 * j + 2]]
    }

    /// First `len` frames.
    pub fn truncated(&self, len: usize) -> Self {
        let d = self.dim();
        Self {
            skeleton: self.skeleton.clone(),
            frame_rate: self.frame_rate,
            root_translation: self.root_translation,
            num_frames: len.min(self.num_frames),
            data: self.data[..len.min(self.num_frames) * d].to_vec(),
        }
    }
}

/// Log map of `tpose⁻¹ · R` for every joint and frame.
pub fn to_expmap(
    frames: &RotationFrames,
    tpose: &TPose,
    root_translation: bool,
) -> Result<PoseSequence> {
    let j = frames.skeleton.len();
    if tpose.0.len() != j {
        return Err(Error::Shape(format!(
            "T-pose has {} joints, skeleton has {j}",
            tpose.0.len()
        )));
    }
    let n = frames.num_frames();
    let dim = PoseSequence::dim_for(&frames.skeleton, root_translation);
    let mut data = Vec::with_capacity(n * dim);
    let inv: Vec<Mat3> = tpose.0.iter().map(rotation::transpose).collect();
    for t in 0..n {
        for (ji, ref_inv) in inv.iter().enumerate() {
            let rel = rotation::mul(ref_inv, frames.rotation(t, ji));
            data.extend_from_slice(&rotation::log_map(&rel));
        }
        if root_translation {
            let tr = frames
                .root_translation
                .as_ref()
                .map(|tr| tr[t])
                .unwrap_or([0.0; 3]);
            data.extend_from_slice(&tr);
        }
    }
    PoseSequence::new(frames.skeleton.clone(), frames.frame_rate, root_translation, data)
}

/// `tpose · exp(v)` for every joint and frame.
pub fn from_expmap(pose: &PoseSequence, tpose: &TPose) -> Result<RotationFrames> {
    let j = pose.skeleton.len();
    if tpose.0.len() != j {
        return Err(Error::Shape(format!(
            "T-pose has {} joints, skeleton has {j}",
            tpose.0.len()
        )));
    }
    let n = pose.num_frames();
    let mut rotations = Vec::with_capacity(n * j);
    let mut translations = Vec::with_capacity(n);
    for t in 0..n {
        for (ji, reference) in tpose.0.iter().enumerate() {
            rotations.push(rotation::mul(
                reference,
                &rotation::exp_map(pose.joint_expmap(t, ji)),
            ));
        }
        if pose.root_translation {
            let f = pose.frame(t);
            let k = 3 * j;
            translations.push([f[k], f[k + 1], f[k + 2]]);
        }
    }
    Ok(RotationFrames {
        skeleton: pose.skeleton.clone(),
        frame_rate: pose.frame_rate,
        rotations,
        root_translation: if pose.root_translation {
            Some(translations)
        } else {
            None
        },
    })
}
