//! Markerless camera-to-robot extrinsics calibration.
//!
//! Given 2D keypoint detections of a robot (pixel coordinates or belief maps),
//! the robot joint configuration and the camera intrinsics, recover the
//! `cam_from_base` rigid transform with PnP. The crate also carries a classic
//! hand-eye (AX = XB) baseline, PCK/ADD/AUC evaluation, the combination-sweep
//! protocol for multi-frame comparisons, and a seeded synthetic data generator
//! used as the end-to-end oracle.

pub mod beliefmap;
pub mod geometry;
pub mod handeye;
pub mod kinematics;
pub mod metrics;
mod p3p;
pub mod pnp;
pub mod synth;

pub use geometry::{CameraIntrinsics, Rotation, Transform, Vec2, Vec3};
pub use kinematics::{JointConfig, KinematicChain};
