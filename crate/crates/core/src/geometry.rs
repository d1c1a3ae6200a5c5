//! Rigid-body algebra and the pinhole camera model.
//!
//! Conventions used throughout the crate:
//!
//! - `Transform` named `a_from_b` maps coordinates expressed in frame `b`
//!   into frame `a`. The calibration output is `cam_from_base`.
//! - Camera frame follows the usual vision convention: +x right, +y down,
//!   +z along the optical axis.
//! - Lengths are meters, angles radians.

use nalgebra::{Matrix3, Matrix4, Quaternion, Unit, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Rotations whose angle is closer than this to pi have no well-conditioned log.
pub const LOG_ANGLE_MARGIN: f64 = 1e-6;
/// Minimum camera-frame depth for a point to be projectable.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation angle {angle} rad is too close to pi for a stable logarithm")]
    AngleNearPi { angle: f64 },
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid quaternion: {0}")]
    InvalidQuaternion(String),
}

/// Unit quaternion rotation kept in the canonical hemisphere `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from raw quaternion components, renormalizing.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        let q = Quaternion::new(w, x, y, z);
        let n = q.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::InvalidQuaternion(format!("norm {n} is not usable")));
        }
        Ok(Self::from_unit(Unit::new_normalize(q)))
    }

    pub fn from_unit(q: UnitQuaternion<f64>) -> Self {
        // Renormalize again so that long composition chains cannot drift.
        let mut raw = q.into_inner();
        raw /= raw.norm();
        if raw.w < 0.0 {
            raw = -raw;
        }
        Rotation(Unit::new_unchecked(raw))
    }

    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self::from_unit(UnitQuaternion::from_rotation_matrix(&rot))
    }

    /// Extrinsic X-Y-Z roll/pitch/yaw (URDF convention): `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::from_unit(UnitQuaternion::from_euler_angles(roll, pitch, yaw))
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::exp(&(axis / n * angle))
    }

    /// Exponential map from an axis-angle vector.
    pub fn exp(v: &Vec3) -> Self {
        let theta = v.norm();
        let half = 0.5 * theta;
        // sin(theta/2)/theta, with a series expansion near zero.
        let k = if theta < 1e-8 {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        let q = Quaternion::new(half.cos(), k * v.x, k * v.y, k * v.z);
        Self::from_unit(Unit::new_unchecked(q))
    }

    /// Logarithm map to an axis-angle vector with angle in `[0, pi)`.
    pub fn log(&self) -> Result<Vec3, GeometryError> {
        let q = self.0.quaternion();
        let vn = q.imag().norm();
        let angle = 2.0 * vn.atan2(q.w);
        if angle > std::f64::consts::PI - LOG_ANGLE_MARGIN {
            return Err(GeometryError::AngleNearPi { angle });
        }
        // angle / sin(angle/2), series near zero.
        let k = if vn < 1e-8 {
            2.0 / q.w * (1.0 - vn * vn / (3.0 * q.w * q.w))
        } else {
            angle / vn
        };
        Ok(q.imag() * k)
    }

    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.imag().norm().atan2(q.w)
    }

    /// Angle of the relative rotation `self^-1 * other`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        self.inverse().compose(other).angle()
    }

    /// Distance between quaternions modulo the double cover.
    pub fn quat_distance(&self, other: &Rotation) -> f64 {
        let a = self.0.quaternion().coords;
        let b = other.0.quaternion().coords;
        (a - b).norm().min((a + b).norm())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Self::from_unit(self.0 * other.0)
    }

    pub fn inverse(&self) -> Rotation {
        Self::from_unit(self.0.inverse())
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.0 * p
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        *self.0.to_rotation_matrix().matrix()
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transform {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Transform {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Transform { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Vec3::zeros())
    }

    /// URDF-style `origin` element: translation `xyz` and extrinsic `rpy`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            Rotation::from_rpy(rpy[0], rpy[1], rpy[2]),
            Vec3::new(xyz[0], xyz[1], xyz[2]),
        )
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Transform) -> Transform {
        Transform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform {
        let r_inv = self.rotation.inverse();
        Transform {
            rotation: r_inv,
            translation: -r_inv.apply(&self.translation),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation_error(&self, other: &Transform) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }

    pub fn translation_error(&self, other: &Transform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Pinhole camera without lens distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = GeometryError;
    fn try_from(r: RawIntrinsics) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must be finite".into(),
            ));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Projects a camera-frame point.
    pub fn project_camera_point(&self, p: &Vec3) -> Result<Vec2, GeometryError> {
        if p.z <= MIN_DEPTH {
            return Err(GeometryError::BehindCamera { depth: p.z });
        }
        Ok(Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Half-open image bounds `[0, width) x [0, height)`.
    pub fn contains_pixel(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x < self.width as f64 && px.y < self.height as f64
    }
}

pub fn project(k: &CameraIntrinsics, cam_from_robot: &Transform, p_robot: &Vec3) -> Result<Vec2, GeometryError> {
    k.project_camera_point(&cam_from_robot.apply(p_robot))
}

/// Visibility ignoring occlusion: in front of the camera and inside the image.
pub fn in_frustum(k: &CameraIntrinsics, cam_from_robot: &Transform, p_robot: &Vec3) -> bool {
    match project(k, cam_from_robot, p_robot) {
        Ok(px) => k.contains_pixel(&px),
        Err(_) => false,
    }
}

pub fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Closest rotation (Frobenius norm) to an arbitrary 3x3 matrix.
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * v_t
}

/// Serialized pose shape shared by every JSON interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseJson {
    pub rotation_quat_wxyz: [f64; 4],
    pub translation_m: [f64; 3],
}

impl From<&Transform> for PoseJson {
    fn from(t: &Transform) -> Self {
        PoseJson {
            rotation_quat_wxyz: t.rotation.wxyz(),
            translation_m: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<PoseJson> for Transform {
    type Error = GeometryError;
    fn try_from(p: PoseJson) -> Result<Self, Self::Error> {
        let [w, x, y, z] = p.rotation_quat_wxyz;
        let t = Vec3::from(p.translation_m);
        if !t.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidQuaternion("translation must be finite".into()));
        }
        Ok(Transform::new(Rotation::from_wxyz(w, x, y, z)?, t))
    }
}

impl Serialize for Transform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = PoseJson::deserialize(d)?;
        Transform::try_from(raw).map_err(serde::de::Error::custom)
    }
}
