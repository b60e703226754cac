use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::rotation::{self, Axis, Mat3, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    Position(Axis),
    Rotation(Axis),
}

impl Channel {
    pub fn label(self) -> &'static str {
        match self {
            Channel::Position(Axis::X) => "Xposition",
            Channel::Position(Axis::Y) => "Yposition",
            Channel::Position(Axis::Z) => "Zposition",
            Channel::Rotation(Axis::X) => "Xrotation",
            Channel::Rotation(Axis::Y) => "Yrotation",
            Channel::Rotation(Axis::Z) => "Zrotation",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Some(match label {
            "Xposition" => Channel::Position(Axis::X),
            "Yposition" => Channel::Position(Axis::Y),
            "Zposition" => Channel::Position(Axis::Z),
            "Xrotation" => Channel::Rotation(Axis::X),
            "Yrotation" => Channel::Rotation(Axis::Y),
            "Zrotation" => Channel::Rotation(Axis::Z),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
    pub offset: Vec3,
    pub channels: Vec<Channel>,
    /// Offset of a terminal `End Site`, if the joint has one.
    pub end_site: Option<Vec3>,
}

impl Joint {
    /// Rotation axes in the order the channels compose them.
    pub fn rotation_order(&self) -> [Axis; 3] {
        let mut order = [Axis::X; 3];
        let mut k = 0;
        for ch in &self.channels {
            if let Channel::Rotation(a) = ch {
                order[k] = *a;
                k += 1;
            }
        }
        order
    }

    pub fn has_position(&self) -> bool {
        self.channels
            .iter()
            .any(|c| matches!(c, Channel::Position(_)))
    }
}

/// Joint hierarchy in depth-first order (root first), the order BVH lists joints in.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joints: Vec<Joint>,
}

impl Skeleton {
    pub fn new(joints: Vec<Joint>) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::Skeleton("no joints".into()));
        }
        for (i, j) in joints.iter().enumerate() {
            match j.parent {
                None if i != 0 => {
                    return Err(Error::Skeleton(format!("second root joint `{}`", j.name)))
                }
                Some(_) if i == 0 => {
                    return Err(Error::Skeleton("first joint must be the root".into()))
                }
                Some(p) if p >= i => {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` has parent {p} not preceding index {i}",
                        j.name
                    )))
                }
                _ => {}
            }
            // depth-first: the parent is the previous joint or one of its ancestors
            if let Some(p) = j.parent {
                let mut a = Some(i - 1);
                while a.is_some_and(|a| a != p) {
                    a = joints[a.unwrap()].parent;
                }
                if a.is_none() {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` breaks depth-first order (parent {p})",
                        j.name
                    )));
                }
            }
            let rots: Vec<Axis> = j
                .channels
                .iter()
                .filter_map(|c| match c {
                    Channel::Rotation(a) => Some(*a),
                    _ => None,
                })
                .collect();
            let distinct = rots.len() == 3
                && rots[0] != rots[1]
                && rots[1] != rots[2]
                && rots[0] != rots[2];
            if !distinct {
                return Err(Error::Skeleton(format!(
                    "joint `{}` needs three distinct rotation channels",
                    j.name
                )));
            }
            let positions: Vec<Axis> = j
                .channels
                .iter()
                .filter_map(|c| match c {
                    Channel::Position(a) => Some(*a),
                    _ => None,
                })
                .collect();
            match positions.len() {
                0 => {}
                3 if i == 0 => {
                    if positions[0] == positions[1]
                        || positions[1] == positions[2]
                        || positions[0] == positions[2]
                    {
                        return Err(Error::Skeleton("repeated root position channel".into()));
                    }
                }
                _ => {
                    return Err(Error::Skeleton(format!(
                        "joint `{}` has unsupported position channels",
                        j.name
                    )))
                }
            }
        }
        Ok(Self { joints })
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn channel_count(&self) -> usize {
        self.joints.iter().map(|j| j.channels.len()).sum()
    }

    pub fn has_root_translation(&self) -> bool {
        self.joints[0].has_position()
    }

    /// Indices of joints whose lowercase name contains any of `needles`.
    pub fn find_joints(&self, needles: &[&str]) -> Vec<usize> {
        self.joints
            .iter()
            .enumerate()
            .filter(|(_, j)| {
                let lower = j.name.to_lowercase();
                needles.iter().any(|n| lower.contains(&n.to_lowercase()))
            })
            .map(|(i, _)| i)
            .collect()
    }
}

/// Motion in the hierarchy's native channels (rotations in degrees).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub skeleton: Skeleton,
    pub frame_time: f64,
    /// `frames × channel_count`, row-major.
    pub values: Vec<f64>,
}

impl MotionClip {
    pub fn new(skeleton: Skeleton, frame_time: f64, values: Vec<f64>) -> Result<Self> {
        if !(frame_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame time {frame_time} must be positive"
            )));
        }
        let c = skeleton.channel_count();
        if !values.len().is_multiple_of(c) {
            return Err(Error::Shape(format!(
                "{} values is not a multiple of {c} channels",
                values.len()
            )));
        }
        Ok(Self {
            skeleton,
            frame_time,
            values,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.values.len() / self.skeleton.channel_count()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let c = self.skeleton.channel_count();
        &self.values[t * c..(t + 1) * c]
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.frame_time
    }

    /// Decode channel values into per-joint local rotations.
    pub fn to_rotation_frames(&self) -> RotationFrames {
        let n = self.num_frames();
        let joints = self.skeleton.joints();
        let mut rotations = Vec::with_capacity(n * joints.len());
        let mut translations = Vec::new();
        let has_root = self.skeleton.has_root_translation();
        for t in 0..n {
            let frame = self.frame(t);
            let mut k = 0;
            for (ji, joint) in joints.iter().enumerate() {
                let mut angles = [0.0; 3];
                let mut pos = [0.0; 3];
                let mut r = 0;
                for ch in &joint.channels {
                    match ch {
                        Channel::Rotation(_) => {
                            angles[r] = frame[k].to_radians();
                            r += 1;
                        }
                        Channel::Position(a) => pos[a.index()] = frame[k],
                    }
                    k += 1;
                }
                rotations.push(rotation::from_euler(joint.rotation_order(), angles));
                if ji == 0 && has_root {
                    translations.push(pos);
                }
            }
        }
        RotationFrames {
            skeleton: self.skeleton.clone(),
            frame_rate: self.frame_rate(),
            rotations,
            root_translation: if has_root { Some(translations) } else { None },
        }
    }
}

/// Local joint rotation matrices per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationFrames {
    pub skeleton: Skeleton,
    pub frame_rate: f64,
    /// `frames × joints`.
    pub rotations: Vec<Mat3>,
    pub root_translation: Option<Vec<Vec3>>,
}

impl RotationFrames {
    pub fn num_frames(&self) -> usize {
        self.rotations.len() / self.skeleton.len()
    }

    pub fn rotation(&self, t: usize, j: usize) -> &Mat3 {
        &self.rotations[t * self.skeleton.len() + j]
    }

    /// Encode back into the skeleton's Euler channels (degrees). Position
    /// channels without a translation track are written as zero.
    pub fn to_motion_clip(&self) -> MotionClip {
        let n = self.num_frames();
        let joints = self.skeleton.joints();
        let mut values = Vec::with_capacity(n * self.skeleton.channel_count());
        for t in 0..n {
            for (ji, joint) in joints.iter().enumerate() {
                let angles = rotation::to_euler(joint.rotation_order(), self.rotation(t, ji));
                let pos = match (&self.root_translation, ji) {
                    (Some(tr), 0) => tr[t],
                    _ => [0.0; 3],
                };
                let mut r = 0;
                for ch in &joint.channels {
                    match ch {
                        Channel::Rotation(_) => {
                            values.push(angles[r].to_degrees());
                            r += 1;
                        }
                        Channel::Position(a) => values.push(pos[a.index()]),
                    }
                }
            }
        }
        MotionClip {
            skeleton: self.skeleton.clone(),
            frame_time: 1.0 / self.frame_rate,
            values,
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    pub fn joint(name: &str, parent: Option<usize>, offset: Vec3, order: [Axis; 3]) -> Joint {
        let mut channels = Vec::new();
        if parent.is_none() {
            channels.extend([
                Channel::Position(Axis::X),
                Channel::Position(Axis::Y),
                Channel::Position(Axis::Z),
            ]);
        }
        channels.extend(order.map(Channel::Rotation));
        Joint {
            name: name.to_string(),
            parent,
            offset,
            channels,
            end_site: None,
        }
    }

    pub fn chain(n: usize, offset: Vec3) -> Skeleton {
        let mut joints = vec![joint("root", None, [0.0; 3], [Axis::Z, Axis::X, Axis::Y])];
        for i in 1..n {
            joints.push(joint(
                &alloc::format!("j{i}"),
                Some(i - 1),
                offset,
                [Axis::Z, Axis::X, Axis::Y],
            ));
        }
        Skeleton::new(joints).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use alloc::vec;

    #[test]
    fn rejects_bad_topology() {
        let mut j = vec![
            joint("a", None, [0.0; 3], [Axis::X, Axis::Y, Axis::Z]),
            joint("b", Some(0), [0.0; 3], [Axis::X, Axis::Y, Axis::Z]),
        ];
        j[1].parent = Some(1);
        assert!(Skeleton::new(j.clone()).is_err());
        j[1].parent = None;
        assert!(Skeleton::new(j.clone()).is_err());
        j[1].parent = Some(0);
        j[1].channels[0] = Channel::Rotation(Axis::Y);
        assert!(Skeleton::new(j).is_err());
    }

    #[test]
    fn requires_depth_first_order() {
        let o = [Axis::Z, Axis::X, Axis::Y];
        // a → b, a → c, b → d: d must come right after b
        let mut j = vec![
            joint("a", None, [0.0; 3], o),
            joint("b", Some(0), [0.0; 3], o),
            joint("c", Some(0), [0.0; 3], o),
            joint("d", Some(1), [0.0; 3], o),
        ];
        assert!(Skeleton::new(j.clone()).is_err());
        j.swap(2, 3);
        j[2].parent = Some(1);
        j[3].parent = Some(0);
        assert!(Skeleton::new(j).is_ok());
    }

    #[test]
    fn zero_angles_are_identity() {
        let sk = chain(2, [0.0, 1.0, 0.0]);
        let clip = MotionClip::new(sk, 1.0 / 30.0, vec![0.0; 2 * 9]).unwrap();
        let rf = clip.to_rotation_frames();
        assert_eq!(rf.num_frames(), 2);
        for r in &rf.rotations {
            assert_eq!(*r, rotation::IDENTITY);
        }
    }

    #[test]
    fn channel_encode_decode() {
        let sk = chain(3, [0.0, 1.0, 0.0]);
        let values: Vec<f64> = (0..12).map(|i| (i as f64) * 7.0 - 30.0).collect();
        let clip = MotionClip::new(sk, 0.05, values.clone()).unwrap();
        let back = clip.to_rotation_frames().to_motion_clip();
        for (a, b) in values.iter().zip(&back.values) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
