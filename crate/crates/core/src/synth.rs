//! Seeded synthetic datasets: camera placement on a shell around the robot,
//! joint sampling, projection, and detection-space noise.
//!
//! Randomness comes from ChaCha8 (a counter-based generator) seeded once from
//! the user seed. Each consumer draws from its own stream so that frames can
//! be generated in parallel and still be bit-identical:
//!
//! | stream            | consumer                         |
//! |-------------------|----------------------------------|
//! | 0                 | static camera pose               |
//! | 1 + i             | frame `i` (camera if per-frame, joints, noise) |
//! | 2^32 + i          | hand-eye sample `i` pose noise   |
//!
//! Camera conventions: azimuth 0 is the base +x axis, positive toward +y;
//! elevation is measured up from the base xy-plane; the camera aims at the
//! base origin with image "up" toward base +z, then its optical axis is
//! tilted uniformly within the jitter cone.

use crate::beliefmap::{render_gt, BeliefMap, BeliefMapError, BeliefMapStack, KeypointDetection, MapScale, GT_SIGMA};
use crate::geometry::{in_frustum, project, CameraIntrinsics, Rotation, Transform, Vec2, Vec3};
use crate::handeye::HandEyeSample;
use crate::kinematics::{JointConfig, KinematicChain, KinematicsError, NamedPoint3};
use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const CAMERA_STREAM: u64 = 0;
const FRAME_STREAM_BASE: u64 = 1;
const HANDEYE_STREAM_BASE: u64 = 1 << 32;

pub const NOISE_LABEL: &str = "detection-space noise standing in for detector error";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("joint {0} has no limits to sample from")]
    MissingLimits(String),
    #[error("chain has {0} keypoints; at least 4 are required")]
    TooFewKeypoints(usize),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    BeliefMap(#[from] BeliefMapError),
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn sample_range<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    // Always consume one draw, even for degenerate ranges.
    let u: f64 = rng.random();
    r[0] + (r[1] - r[0]) * u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraShellConfig {
    pub azimuth_deg: [f64; 2],
    pub elevation_deg: [f64; 2],
    pub distance_m: [f64; 2],
    /// Half-angle of the cone the optical axis is tilted within.
    pub jitter_deg: f64,
}

impl Default for CameraShellConfig {
    fn default() -> Self {
        CameraShellConfig {
            azimuth_deg: [-135.0, 135.0],
            elevation_deg: [-10.0, 75.0],
            distance_m: [0.75, 1.20],
            jitter_deg: 5.0,
        }
    }
}

impl CameraShellConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ok(self.azimuth_deg) || !ok(self.elevation_deg) || !ok(self.distance_m) {
            return Err(SynthError::InvalidConfig("ranges must be finite with lo <= hi".into()));
        }
        if self.distance_m[0] <= 0.0 {
            return Err(SynthError::InvalidConfig("distance must be positive".into()));
        }
        if self.elevation_deg[0] <= -90.0 || self.elevation_deg[1] >= 90.0 {
            return Err(SynthError::InvalidConfig("elevation must lie in (-90, 90)".into()));
        }
        if !(self.jitter_deg >= 0.0 && self.jitter_deg < 90.0) {
            return Err(SynthError::InvalidConfig("jitter must lie in [0, 90)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Gaussian pixel noise standard deviation.
    pub pixel_sigma: f64,
    /// Probability that a visible keypoint produces no detection.
    pub dropout_prob: f64,
    /// Probability of a gross mislocalization.
    pub outlier_prob: f64,
    /// Outliers are displaced uniformly within a disk of this radius (pixels).
    pub outlier_radius: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let p = |v: f64| (0.0..=1.0).contains(&v);
        if !(p(self.dropout_prob) && p(self.outlier_prob)) {
            return Err(SynthError::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.pixel_sigma >= 0.0 && self.outlier_radius >= 0.0) {
            return Err(SynthError::InvalidConfig("noise magnitudes must be >= 0".into()));
        }
        Ok(())
    }
}

/// Rigid-pose noise for simulated fiducial measurements.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseNoise {
    /// Per-axis standard deviation of the rotation-vector perturbation, degrees.
    pub rotation_deg: f64,
    /// Per-axis standard deviation of the translation perturbation, meters.
    pub translation_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraMode {
    #[default]
    Static,
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedPixel {
    pub name: String,
    pub pixel: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedXyz {
    pub name: String,
    pub xyz: [f64; 3],
}

impl From<&NamedPoint3> for NamedXyz {
    fn from(p: &NamedPoint3) -> Self {
        NamedXyz {
            name: p.name.clone(),
            xyz: [p.position.x, p.position.y, p.position.z],
        }
    }
}

impl From<&NamedXyz> for NamedPoint3 {
    fn from(p: &NamedXyz) -> Self {
        NamedPoint3 {
            name: p.name.clone(),
            position: Vec3::from(p.xyz),
        }
    }
}

/// One observation: joint state, detections, and ground truth when known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(default)]
    pub index: usize,
    pub joint_config: JointConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_cam_from_base: Option<Transform>,
    #[serde(default)]
    pub keypoints3d: Vec<NamedXyz>,
    #[serde(default)]
    pub gt_pixels: Vec<NamedPixel>,
    #[serde(default)]
    pub detections: Vec<NamedPixel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief_maps: Option<String>,
}

impl FrameRecord {
    pub fn keypoints(&self) -> Vec<NamedPoint3> {
        self.keypoints3d.iter().map(NamedPoint3::from).collect()
    }

    /// Detections as unit-confidence keypoint detections.
    pub fn keypoint_detections(&self) -> Vec<KeypointDetection> {
        self.detections
            .iter()
            .map(|d| KeypointDetection {
                name: d.name.clone(),
                pixel: d.pixel,
                confidence: 1.0,
            })
            .collect()
    }

    /// Checks that ground-truth pixels are projections of the stored
    /// keypoints and that detections name chain keypoints.
    pub fn validate(&self, chain: &KinematicChain, k: &CameraIntrinsics) -> Result<(), String> {
        let names = chain.keypoint_names();
        for d in &self.detections {
            if !names.contains(&d.name) {
                return Err(format!("frame {}: unknown detection {:?}", self.index, d.name));
            }
        }
        if let Some(gt) = &self.gt_cam_from_base {
            for g in &self.gt_pixels {
                let kp = self
                    .keypoints3d
                    .iter()
                    .find(|p| p.name == g.name)
                    .ok_or_else(|| format!("frame {}: gt pixel {:?} has no keypoint", self.index, g.name))?;
                let px = project(k, gt, &Vec3::from(kp.xyz)).map_err(|e| e.to_string())?;
                if (px - Vec2::from(g.pixel)).norm() > 1e-6 {
                    return Err(format!(
                        "frame {}: gt pixel {:?} is not a projection",
                        self.index, g.name
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub chain: ChainRef,
    pub intrinsics: CameraIntrinsics,
    pub shell: CameraShellConfig,
    pub noise: NoiseConfig,
    pub noise_label: String,
    pub seed: u64,
    pub camera_mode: CameraMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief_map_scale: Option<MapScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub frames: Vec<FrameRecord>,
}

/// Looks from `eye` at `target` with image-up along base +z.
pub fn look_at(eye: &Vec3, target: &Vec3) -> Transform {
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vec3::z()).normalize();
    let down = forward.cross(&right);
    let cam_from_base_rot = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let rotation = Rotation::from_matrix(&cam_from_base_rot);
    Transform::new(rotation, -rotation.apply(eye))
}

pub fn sample_camera_pose<R: Rng>(cfg: &CameraShellConfig, rng: &mut R) -> Transform {
    let az = sample_range(rng, cfg.azimuth_deg).to_radians();
    let el = sample_range(rng, cfg.elevation_deg).to_radians();
    let d = sample_range(rng, cfg.distance_m);
    let eye = Vec3::new(d * el.cos() * az.cos(), d * el.cos() * az.sin(), d * el.sin());
    let aimed = look_at(&eye, &Vec3::zeros());

    // Optical axis uniform on the spherical cap of half-angle `jitter`.
    let cos_max = cfg.jitter_deg.to_radians().cos();
    let u: f64 = rng.random();
    let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let cos_t = 1.0 - u * (1.0 - cos_max);
    let tilt = cos_t.clamp(-1.0, 1.0).acos();
    let axis = Vec3::new(-phi.sin(), phi.cos(), 0.0);
    // Rotating the camera by `tilt` about an in-plane axis moves its optical
    // axis by `tilt` in base coordinates.
    let cam_from_cam_jittered = Transform::from_rotation(Rotation::from_axis_angle(&axis, tilt));
    cam_from_cam_jittered.inverse().compose(&aimed)
}

pub fn sample_joint_config<R: Rng>(chain: &KinematicChain, rng: &mut R) -> Result<JointConfig, SynthError> {
    chain
        .joints
        .iter()
        .filter(|j| j.is_movable())
        .map(|j| {
            let (lo, hi) = j.limits.ok_or_else(|| SynthError::MissingLimits(j.name.clone()))?;
            Ok(sample_range(rng, [lo, hi]).clamp(lo, hi))
        })
        .collect::<Result<Vec<f64>, SynthError>>()
        .map(JointConfig)
}

fn apply_noise<R: Rng>(gt: &[NamedPixel], noise: &NoiseConfig, k: &CameraIntrinsics, rng: &mut R) -> Vec<NamedPixel> {
    let mut out = Vec::with_capacity(gt.len());
    for g in gt {
        // Fixed number of draws per keypoint keeps streams aligned across configs.
        let drop_u: f64 = rng.random();
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let out_u: f64 = rng.random();
        let out_r: f64 = rng.random();
        let out_phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
        if drop_u < noise.dropout_prob {
            continue;
        }
        let mut p = Vec2::from(g.pixel) + Vec2::new(nx, ny) * noise.pixel_sigma;
        if out_u < noise.outlier_prob {
            let r = noise.outlier_radius * out_r.sqrt();
            p += Vec2::new(out_phi.cos(), out_phi.sin()) * r;
        }
        if k.contains_pixel(&p) {
            out.push(NamedPixel {
                name: g.name.clone(),
                pixel: [p.x, p.y],
            });
        }
    }
    out
}

/// Builds a frame for a given joint configuration and camera pose.
pub fn make_frame<R: Rng>(
    index: usize,
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    q: JointConfig,
    cam_from_base: Transform,
    noise: &NoiseConfig,
    rng: &mut R,
) -> Result<FrameRecord, SynthError> {
    let kps = chain.keypoint_positions(&q)?;
    let gt_pixels: Vec<NamedPixel> = kps
        .iter()
        .filter(|p| in_frustum(k, &cam_from_base, &p.position))
        .map(|p| {
            let px = project(k, &cam_from_base, &p.position).expect("in frustum");
            NamedPixel {
                name: p.name.clone(),
                pixel: [px.x, px.y],
            }
        })
        .collect();
    let detections = apply_noise(&gt_pixels, noise, k, rng);
    Ok(FrameRecord {
        index,
        joint_config: q,
        gt_cam_from_base: Some(cam_from_base),
        keypoints3d: kps.iter().map(NamedXyz::from).collect(),
        gt_pixels,
        detections,
        belief_maps: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub n_frames: usize,
    pub camera_mode: CameraMode,
    pub seed: u64,
}

pub fn generate_dataset(
    chain: &KinematicChain,
    intrinsics: &CameraIntrinsics,
    shell: &CameraShellConfig,
    noise: &NoiseConfig,
    opts: &GenerateOptions,
) -> Result<Dataset, SynthError> {
    shell.validate()?;
    noise.validate()?;
    if chain.keypoints.len() < 4 {
        return Err(SynthError::TooFewKeypoints(chain.keypoints.len()));
    }
    let static_cam = sample_camera_pose(shell, &mut stream_rng(opts.seed, CAMERA_STREAM));
    let frames = (0..opts.n_frames)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(opts.seed, FRAME_STREAM_BASE + i as u64);
            let cam = match opts.camera_mode {
                CameraMode::Static => static_cam,
                CameraMode::PerFrame => sample_camera_pose(shell, &mut rng),
            };
            let q = sample_joint_config(chain, &mut rng)?;
            make_frame(i, chain, intrinsics, q, cam, noise, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset {
        header: DatasetHeader {
            chain: ChainRef {
                name: chain.name.clone(),
                path: None,
                sha256: None,
            },
            intrinsics: *intrinsics,
            shell: *shell,
            noise: *noise,
            noise_label: NOISE_LABEL.to_string(),
            seed: opts.seed,
            camera_mode: opts.camera_mode,
            belief_map_scale: None,
        },
        frames,
    })
}

/// Ground-truth-style belief maps rendered at the frame's detections; keypoints
/// without a detection get an all-zero map.
pub fn render_frame_belief_maps(
    chain: &KinematicChain,
    frame: &FrameRecord,
    k: &CameraIntrinsics,
    scale: MapScale,
) -> Result<BeliefMapStack, SynthError> {
    let (w, h) = scale.map_dims(k.width, k.height)?;
    let mut maps = Vec::with_capacity(chain.keypoints.len());
    for kp in &chain.keypoints {
        let map = match frame.detections.iter().find(|d| d.name == kp.name) {
            Some(d) => render_gt(k.width, k.height, scale, Vec2::from(d.pixel), GT_SIGMA)?,
            None => BeliefMap::zeros(w, h, scale),
        };
        maps.push(map);
    }
    Ok(BeliefMapStack::new(chain.keypoint_names(), maps)?)
}

fn perturb<R: Rng>(t: &Transform, noise: &PoseNoise, rng: &mut R) -> Transform {
    let mut draw = || -> f64 { rng.sample(StandardNormal) };
    let (a, b, c, x, y, z) = (draw(), draw(), draw(), draw(), draw(), draw());
    let rot = Vec3::new(a, b, c) * noise.rotation_deg.to_radians();
    let trans = Vec3::new(x, y, z) * noise.translation_m;
    Transform::new(Rotation::exp(&rot), trans).compose(t)
}

/// Simulated fiducial measurements for a marker rigidly mounted on `hand_link`.
pub fn generate_handeye_samples(
    chain: &KinematicChain,
    hand_link: usize,
    hand_from_marker: &Transform,
    cam_from_base: &Transform,
    joint_configs: &[JointConfig],
    noise: &PoseNoise,
    seed: u64,
) -> Result<Vec<HandEyeSample>, SynthError> {
    if hand_link > chain.joints.len() {
        return Err(SynthError::InvalidConfig(format!(
            "hand link {hand_link} does not exist"
        )));
    }
    joint_configs
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let base_from_hand = chain.link_pose(q, hand_link)?;
            let exact = cam_from_base.compose(&base_from_hand).compose(hand_from_marker);
            let cam_from_marker = if noise.rotation_deg > 0.0 || noise.translation_m > 0.0 {
                perturb(&exact, noise, &mut stream_rng(seed, HANDEYE_STREAM_BASE + i as u64))
            } else {
                exact
            };
            Ok(HandEyeSample {
                base_from_hand,
                cam_from_marker,
            })
        })
        .collect()
}

/// Reference target positions in the base frame: five marker locations on
/// the table in front of the robot, each at two heights.
pub fn workspace_targets() -> Vec<Vec3> {
    const MARKERS_XY: [[f64; 2]; 5] = [[0.45, 0.0], [0.55, 0.15], [0.55, -0.15], [0.35, 0.2], [0.35, -0.2]];
    const HEIGHTS: [f64; 2] = [0.05, 0.25];
    HEIGHTS
        .iter()
        .flat_map(|z| MARKERS_XY.iter().map(move |[x, y]| Vec3::new(*x, *y, *z)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::load_chain;

    fn panda() -> KinematicChain {
        load_chain(include_str!("../fixtures/panda.json")).unwrap()
    }

    fn wide() -> CameraIntrinsics {
        serde_json::from_str(include_str!("../fixtures/wide640.json")).unwrap()
    }

    #[test]
    fn degenerate_shell_gives_canonical_pose() {
        let cfg = CameraShellConfig {
            azimuth_deg: [0.0, 0.0],
            elevation_deg: [0.0, 0.0],
            distance_m: [1.0, 1.0],
            jitter_deg: 0.0,
        };
        let pose = sample_camera_pose(&cfg, &mut stream_rng(1, 0));
        // Camera at base (1, 0, 0) looking along -x: right = +y, down = -z.
        let expected = Transform::new(
            Rotation::from_matrix(&Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0)),
            Vec3::new(0.0, 0.0, 1.0),
        );
        assert!(pose.translation_error(&expected) < 1e-12);
        assert!(pose.rotation_error(&expected) < 1e-12);
        assert!((pose.inverse().translation - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn shell_samples_stay_in_range() {
        let cfg = CameraShellConfig::default();
        let mut rng = stream_rng(7, 0);
        for _ in 0..10_000 {
            let pose = sample_camera_pose(&cfg, &mut rng);
            let eye = pose.inverse().translation;
            let d = eye.norm();
            let el = (eye.z / d).asin().to_degrees();
            let az = eye.y.atan2(eye.x).to_degrees();
            assert!((0.75 - 1e-12..=1.20 + 1e-12).contains(&d));
            assert!((-10.0 - 1e-9..=75.0 + 1e-9).contains(&el));
            assert!((-135.0 - 1e-9..=135.0 + 1e-9).contains(&az));
            // Optical axis within the jitter cone of the look-at direction.
            let axis = pose.rotation.inverse().apply(&Vec3::z());
            let ang = axis.dot(&(-eye / d)).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(ang <= 5.0 + 1e-9);
        }
    }

    #[test]
    fn camera_sampling_is_deterministic() {
        let cfg = CameraShellConfig::default();
        let a: Vec<_> = {
            let mut r = stream_rng(42, 3);
            (0..20).map(|_| sample_camera_pose(&cfg, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = stream_rng(42, 3);
            (0..20).map(|_| sample_camera_pose(&cfg, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn joint_sampling() {
        let chain = load_chain(
            r#"{"name":"x","joints":[
                {"name":"a","kind":"revolute","axis":[0,0,1],"limits":[0.3,0.3]},
                {"name":"b","kind":"revolute","axis":[0,1,0],"limits":[-1,2]}],
                "keypoints":[]}"#,
        )
        .unwrap();
        let mut rng = stream_rng(1, 1);
        for _ in 0..10_000 {
            let q = sample_joint_config(&chain, &mut rng).unwrap();
            assert_eq!(q.0[0], 0.3);
            assert!((-1.0..=2.0).contains(&q.0[1]));
        }
        let q1 = sample_joint_config(&panda(), &mut stream_rng(5, 1)).unwrap();
        let q2 = sample_joint_config(&panda(), &mut stream_rng(5, 1)).unwrap();
        assert_eq!(q1, q2);
        panda().check_config(&q1, true).unwrap();
    }

    #[test]
    fn missing_limits_reported() {
        let chain =
            load_chain(r#"{"name":"x","joints":[{"name":"free","kind":"revolute","axis":[0,0,1]}],"keypoints":[]}"#)
                .unwrap();
        assert!(matches!(
            sample_joint_config(&chain, &mut stream_rng(0, 0)),
            Err(SynthError::MissingLimits(_))
        ));
    }

    fn opts(n: usize) -> GenerateOptions {
        GenerateOptions {
            n_frames: n,
            camera_mode: CameraMode::Static,
            seed: 11,
        }
    }

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let ds = generate_dataset(&panda(), &wide(), &Default::default(), &Default::default(), &opts(20)).unwrap();
        for f in &ds.frames {
            assert_eq!(f.detections, f.gt_pixels);
            f.validate(&panda(), &wide()).unwrap();
        }
        let cams: Vec<_> = ds.frames.iter().map(|f| f.gt_cam_from_base).collect();
        assert!(cams.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn full_dropout_removes_everything() {
        let noise = NoiseConfig {
            dropout_prob: 1.0,
            ..Default::default()
        };
        let ds = generate_dataset(&panda(), &wide(), &Default::default(), &noise, &opts(10)).unwrap();
        assert!(ds.frames.iter().all(|f| f.detections.is_empty()));
    }

    #[test]
    fn per_frame_mode_moves_the_camera() {
        let o = GenerateOptions {
            camera_mode: CameraMode::PerFrame,
            ..opts(5)
        };
        let ds = generate_dataset(&panda(), &wide(), &Default::default(), &Default::default(), &o).unwrap();
        assert_ne!(ds.frames[0].gt_cam_from_base, ds.frames[1].gt_cam_from_base);
    }

    #[test]
    fn dataset_is_reproducible() {
        let noise = NoiseConfig {
            pixel_sigma: 2.0,
            dropout_prob: 0.1,
            outlier_prob: 0.05,
            outlier_radius: 30.0,
        };
        let a = generate_dataset(&panda(), &wide(), &Default::default(), &noise, &opts(30)).unwrap();
        let b = generate_dataset(&panda(), &wide(), &Default::default(), &noise, &opts(30)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn too_few_keypoints() {
        let chain = load_chain(r#"{"name":"x","joints":[],"keypoints":[{"name":"a","link":0}]}"#).unwrap();
        assert!(matches!(
            generate_dataset(&chain, &wide(), &Default::default(), &Default::default(), &opts(1)),
            Err(SynthError::TooFewKeypoints(1))
        ));
    }

    #[test]
    fn handeye_identity_marker_and_camera() {
        let chain = panda();
        let qs: Vec<_> = (0..4)
            .map(|i| sample_joint_config(&chain, &mut stream_rng(3, i)).unwrap())
            .collect();
        let samples = generate_handeye_samples(
            &chain,
            8,
            &Transform::identity(),
            &Transform::identity(),
            &qs,
            &PoseNoise::default(),
            0,
        )
        .unwrap();
        for s in &samples {
            assert_eq!(s.cam_from_marker, s.base_from_hand);
        }
    }

    #[test]
    fn handeye_samples_reproducible() {
        let chain = panda();
        let qs: Vec<_> = (0..4)
            .map(|i| sample_joint_config(&chain, &mut stream_rng(3, i)).unwrap())
            .collect();
        let noise = PoseNoise {
            rotation_deg: 0.5,
            translation_m: 0.002,
        };
        let cam = look_at(&Vec3::new(1.0, 0.2, 0.5), &Vec3::zeros());
        let a = generate_handeye_samples(&chain, 8, &Transform::identity(), &cam, &qs, &noise, 9).unwrap();
        let b = generate_handeye_samples(&chain, 8, &Transform::identity(), &cam, &qs, &noise, 9).unwrap();
        assert_eq!(a, b);
    }
}
