//! Serial-chain forward kinematics and keypoint placement.
//!
//! Chains are described in a small JSON format whose joint fields mirror the
//! URDF `origin` / `axis` / `limit` elements, so translating a URDF by hand is
//! mechanical:
//!
//! ```json
//! {"name": "arm",
//!  "joints": [{"name": "j1", "kind": "revolute",
//!              "origin": {"xyz": [0, 0, 0.333], "rpy": [0, 0, 0]},
//!              "axis": [0, 0, 1], "limits": [-2.9, 2.9]}],
//!  "keypoints": [{"name": "base", "link": 0, "offset": [0, 0, 0]}]}
//! ```
//!
//! Link 0 is the base frame; link `i` is the frame after joint `i`.

use crate::geometry::{Rotation, Transform, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const AXIS_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("chain parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("chain validation error in {field}: {message}")]
    Validation { field: String, message: String },
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("joint {joint} value {value} outside limits [{lower}, {upper}]")]
    OutOfLimits {
        joint: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("joint {0} has no limits")]
    MissingLimits(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    pub name: String,
    pub kind: JointKind,
    pub origin: Transform,
    pub axis: Vec3,
    pub limits: Option<(f64, f64)>,
}

impl JointSpec {
    pub fn is_movable(&self) -> bool {
        self.kind != JointKind::Fixed
    }

    fn motion(&self, q: f64) -> Transform {
        match self.kind {
            JointKind::Revolute => Transform::from_rotation(Rotation::from_axis_angle(&self.axis, q)),
            JointKind::Prismatic => Transform::from_translation(self.axis * q),
            JointKind::Fixed => Transform::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub name: String,
    pub link: usize,
    pub offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub name: String,
    pub joints: Vec<JointSpec>,
    pub keypoints: Vec<Keypoint>,
}

/// Joint positions for the movable joints, in chain order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPoint3 {
    pub name: String,
    pub position: Vec3,
}

// --- document model -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainDoc {
    name: String,
    joints: Vec<JointDoc>,
    keypoints: Vec<KeypointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    name: String,
    kind: JointKind,
    #[serde(default)]
    origin: OriginDoc,
    #[serde(default)]
    axis: Option<[f64; 3]>,
    #[serde(default)]
    limits: Option<[f64; 2]>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginDoc {
    #[serde(default)]
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct KeypointDoc {
    name: String,
    link: usize,
    #[serde(default)]
    offset: [f64; 3],
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> KinematicsError {
    KinematicsError::Validation {
        field: field.into(),
        message: message.into(),
    }
}

/// Parses and validates a chain document.
pub fn load_chain(document: &str) -> Result<KinematicChain, KinematicsError> {
    let doc: ChainDoc = serde_json::from_str(document).map_err(|e| KinematicsError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut joints = Vec::with_capacity(doc.joints.len());
    for (i, j) in doc.joints.into_iter().enumerate() {
        let field = |f: &str| format!("joints[{i}].{f}");
        if j.origin.xyz.iter().chain(&j.origin.rpy).any(|v| !v.is_finite()) {
            return Err(invalid(field("origin"), "non-finite value"));
        }
        let axis = match (j.kind, j.axis) {
            (JointKind::Fixed, a) => a.map(Vec3::from).unwrap_or_else(Vec3::z),
            (_, None) => return Err(invalid(field("axis"), "movable joint requires an axis")),
            (_, Some(a)) => {
                let a = Vec3::from(a);
                if !a.iter().all(|v| v.is_finite()) || (a.norm() - 1.0).abs() > AXIS_NORM_TOL {
                    return Err(invalid(
                        field("axis"),
                        format!("axis must have unit norm, got norm {}", a.norm()),
                    ));
                }
                a
            }
        };
        let limits = match j.limits {
            Some([lo, hi]) => {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(invalid(
                        field("limits"),
                        format!("need finite lower <= upper, got [{lo}, {hi}]"),
                    ));
                }
                Some((lo, hi))
            }
            None => None,
        };
        joints.push(JointSpec {
            name: j.name,
            kind: j.kind,
            origin: Transform::from_xyz_rpy(j.origin.xyz, j.origin.rpy),
            axis,
            limits: if j.kind == JointKind::Fixed { None } else { limits },
        });
    }

    let n_links = joints.len() + 1;
    let mut keypoints = Vec::with_capacity(doc.keypoints.len());
    for (i, k) in doc.keypoints.into_iter().enumerate() {
        if k.link >= n_links {
            return Err(invalid(
                format!("keypoints[{i}].link"),
                format!("link {} does not exist (chain has links 0..{})", k.link, n_links - 1),
            ));
        }
        if keypoints.iter().any(|p: &Keypoint| p.name == k.name) {
            return Err(invalid(
                format!("keypoints[{i}].name"),
                format!("duplicate keypoint name {:?}", k.name),
            ));
        }
        keypoints.push(Keypoint {
            name: k.name,
            link: k.link,
            offset: Vec3::from(k.offset),
        });
    }

    Ok(KinematicChain {
        name: doc.name,
        joints,
        keypoints,
    })
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.iter().filter(|j| j.is_movable()).count()
    }

    pub fn keypoint_names(&self) -> Vec<String> {
        self.keypoints.iter().map(|k| k.name.clone()).collect()
    }

    pub fn check_config(&self, q: &JointConfig, check_limits: bool) -> Result<(), KinematicsError> {
        if q.0.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.0.len(),
            });
        }
        if check_limits {
            for (j, &v) in self.joints.iter().filter(|j| j.is_movable()).zip(&q.0) {
                if let Some((lower, upper)) = j.limits {
                    if v < lower || v > upper {
                        return Err(KinematicsError::OutOfLimits {
                            joint: j.name.clone(),
                            value: v,
                            lower,
                            upper,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Base-frame pose of every link frame `1..=joints.len()`.
    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<Vec<Transform>, KinematicsError> {
        self.check_config(q, false)?;
        let mut values = q.0.iter();
        let mut pose = Transform::identity();
        let mut out = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let v = if j.is_movable() {
                *values.next().expect("length checked")
            } else {
                0.0
            };
            pose = pose.compose(&j.origin).compose(&j.motion(v));
            out.push(pose);
        }
        Ok(out)
    }

    /// Base-frame pose of link `link` (0 is the base).
    pub fn link_pose(&self, q: &JointConfig, link: usize) -> Result<Transform, KinematicsError> {
        if link > self.joints.len() {
            return Err(invalid("link", format!("link {link} does not exist")));
        }
        if link == 0 {
            self.check_config(q, false)?;
            return Ok(Transform::identity());
        }
        Ok(self.forward_kinematics(q)?[link - 1])
    }

    pub fn keypoint_positions(&self, q: &JointConfig) -> Result<Vec<NamedPoint3>, KinematicsError> {
        let links = self.forward_kinematics(q)?;
        Ok(self
            .keypoints
            .iter()
            .map(|k| {
                let pose = if k.link == 0 {
                    Transform::identity()
                } else {
                    links[k.link - 1]
                };
                NamedPoint3 {
                    name: k.name.clone(),
                    position: pose.apply(&k.offset),
                }
            })
            .collect())
    }
}
