//! Skeletons, exponential-map poses, forward kinematics and mocap cleanup checks.

pub mod fk;
pub mod hampel;
pub mod pose;
pub mod rotation;
pub mod skeleton;
pub mod stats;

pub use fk::{forward_kinematics, forward_kinematics_rotations, JointPositions};
pub use hampel::{detect_speed_anomalies, AnomalyEntry, AnomalyReport, HampelParams};
pub use pose::{from_expmap, to_expmap, PoseSequence, TPose};
pub use rotation::{Axis, Mat3, Vec3};
pub use skeleton::{Channel, Joint, MotionClip, RotationFrames, Skeleton};
pub use stats::{motion_stats, tracked_joints, wrist_joints, MotionStats, StatsParams};
