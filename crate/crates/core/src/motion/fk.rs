use alloc::vec::Vec;

use super::pose::{from_expmap, PoseSequence, TPose};
use super::rotation::{self, Vec3};
use super::skeleton::RotationFrames;
use crate::error::Result;

/// World-space joint positions, `frames × joints`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPositions {
    pub frame_rate: f64,
    pub num_joints: usize,
    pub positions: Vec<Vec3>,
}

impl JointPositions {
    pub fn num_frames(&self) -> usize {
        self.positions.len() / self.num_joints
    }

    pub fn at(&self, t: usize, j: usize) -> Vec3 {
        self.positions[t * self.num_joints + j]
    }

    /// Same positions shifted by a constant vector.
    pub fn translated(&self, by: Vec3) -> Self {
        Self {
            frame_rate: self.frame_rate,
            num_joints: self.num_joints,
            positions: self
                .positions
                .iter()
                .map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]])
                .collect(),
        }
    }

    /// `‖p_t − p_{t−1}‖ · rate` for `t ≥ 1`; index 0 of the result is frame 1.
    pub fn speeds(&self, j: usize) -> Vec<f64> {
        (1..self.num_frames())
            .map(|t| {
                let (a, b) = (self.at(t, j), self.at(t - 1, j));
                let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
                rotation::norm(&d) * self.frame_rate
            })
            .collect()
    }
}

/// Forward kinematics on local rotations. The root sits at its translation
/// track, or at the origin without one.
pub fn forward_kinematics_rotations(frames: &RotationFrames) -> JointPositions {
    let joints = frames.skeleton.joints();
    let nj = joints.len();
    let n = frames.num_frames();
    let mut positions = Vec::with_capacity(n * nj);
    let mut world = Vec::with_capacity(nj);
    for t in 0..n {
        world.clear();
        let base = positions.len();
        for (j, joint) in joints.iter().enumerate() {
            let local = frames.rotation(t, j);
            match joint.parent {
                None => {
                    let root = frames
                        .root_translation
                        .as_ref()
                        .map(|tr| tr[t])
                        .unwrap_or([0.0; 3]);
                    positions.push(root);
                    world.push(*local);
                }
                Some(p) => {
                    let parent_pos: Vec3 = positions[base + p];
                    let off = rotation::apply(&world[p], &joint.offset);
                    positions.push([
                        parent_pos[0] + off[0],
                        parent_pos[1] + off[1],
                        parent_pos[2] + off[2],
                    ]);
                    world.push(rotation::mul(&world[p], local));
                }
            }
        }
    }
    JointPositions {
        frame_rate: frames.frame_rate,
        num_joints: nj,
        positions,
    }
}

pub fn forward_kinematics(pose: &PoseSequence, tpose: &TPose) -> Result<JointPositions> {
    Ok(forward_kinematics_rotations(&from_expmap(pose, tpose)?))
}

#[cfg(test)]
mod tests {
    use super::super::rotation::{axis_rotation, exp_map, mul, Axis, Mat3, IDENTITY};
    use super::super::skeleton::fixtures::chain;
    use super::super::skeleton::Skeleton;
    use super::*;
    use crate::rng::Rng;
    use alloc::vec;
    use core::f64::consts::PI;

    fn frames(skeleton: Skeleton, rotations: Vec<Mat3>) -> RotationFrames {
        RotationFrames {
            skeleton,
            frame_rate: 30.0,
            rotations,
            root_translation: None,
        }
    }

    #[test]
    fn identity_chain() {
        let sk = chain(3, [0.0, 1.0, 0.0]);
        let p = forward_kinematics_rotations(&frames(sk, vec![IDENTITY; 3]));
        assert_eq!(p.positions, vec![[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 2.0, 0.0]]);
    }

    #[test]
    fn root_half_turn_about_z() {
        let sk = chain(2, [1.0, 0.0, 0.0]);
        let p = forward_kinematics_rotations(&frames(
            sk,
            vec![axis_rotation(Axis::Z, PI), IDENTITY],
        ));
        let c = p.at(0, 1);
        assert!((c[0] + 1.0).abs() < 1e-9 && c[1].abs() < 1e-9 && c[2].abs() < 1e-9);
    }

    /// Homogeneous 4×4 matrix stack, composed independently of the
    /// incremental world-rotation bookkeeping.
    fn matrix_stack_oracle(rf: &RotationFrames) -> Vec<Vec3> {
        type M4 = [[f64; 4]; 4];
        let mul4 = |a: &M4, b: &M4| {
            let mut o = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    for k in 0..4 {
                        o[i][j] += a[i][k] * b[k][j];
                    }
                }
            }
            o
        };
        let homog = |r: &Mat3, t: Vec3| {
            let mut m = [[0.0; 4]; 4];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = r[i][j];
                }
                m[i][3] = t[i];
            }
            m[3][3] = 1.0;
            m
        };
        let joints = rf.skeleton.joints();
        let mut out = Vec::new();
        for t in 0..rf.num_frames() {
            for j in 0..joints.len() {
                // walk the chain to the root, then multiply root-first
                let mut chain_idx = vec![j];
                while let Some(p) = joints[*chain_idx.last().unwrap()].parent {
                    chain_idx.push(p);
                }
                let mut m = homog(&IDENTITY, [0.0; 3]);
                for &k in chain_idx.iter().rev() {
                    let off = if joints[k].parent.is_none() { [0.0; 3] } else { joints[k].offset };
                    m = mul4(&m, &homog(rf.rotation(t, k), off));
                }
                out.push([m[0][3], m[1][3], m[2][3]]);
            }
        }
        out
    }

    fn branching_skeleton() -> Skeleton {
        use super::super::skeleton::fixtures::joint;
        Skeleton::new(vec![
            joint("hips", None, [0.0; 3], [Axis::Z, Axis::X, Axis::Y]),
            joint("spine", Some(0), [0.0, 1.0, 0.0], [Axis::Z, Axis::X, Axis::Y]),
            joint("l_arm", Some(1), [0.5, 0.2, 0.0], [Axis::X, Axis::Y, Axis::Z]),
            joint("l_wrist", Some(2), [0.4, 0.0, 0.1], [Axis::Y, Axis::Z, Axis::X]),
            joint("r_arm", Some(1), [-0.5, 0.2, 0.0], [Axis::Z, Axis::Y, Axis::X]),
            joint("r_wrist", Some(4), [-0.4, 0.0, -0.1], [Axis::X, Axis::Z, Axis::Y]),
        ])
        .unwrap()
    }

    #[test]
    fn matches_matrix_stack_oracle() {
        let mut rng = Rng::new(11);
        let sk = branching_skeleton();
        let rots: Vec<Mat3> = (0..6 * 50)
            .map(|_| exp_map([rng.normal(), rng.normal(), rng.normal()]))
            .collect();
        let rf = frames(sk, rots);
        let p = forward_kinematics_rotations(&rf);
        let o = matrix_stack_oracle(&rf);
        for (a, b) in p.positions.iter().zip(&o) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn root_rotation_equivariance() {
        let mut rng = Rng::new(12);
        let sk = branching_skeleton();
        let rots: Vec<Mat3> = (0..6)
            .map(|_| exp_map([rng.normal(), rng.normal(), rng.normal()]))
            .collect();
        let g = exp_map([0.3, -1.2, 0.4]);
        let mut rotated = rots.clone();
        rotated[0] = mul(&g, &rots[0]);
        let a = forward_kinematics_rotations(&frames(sk.clone(), rots));
        let b = forward_kinematics_rotations(&frames(sk, rotated));
        for (pa, pb) in a.positions.iter().zip(&b.positions) {
            let ga = rotation::apply(&g, pa);
            for k in 0..3 {
                assert!((ga[k] - pb[k]).abs() < 1e-9);
            }
        }
    }
}
