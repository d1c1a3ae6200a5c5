//! Marker-based hand-eye calibration baseline for a stationary camera.
//!
//! The camera observes a fiducial rigidly attached to the robot hand. Every
//! sample satisfies
//!
//! ```text
//! cam_from_base * base_from_hand_i * hand_from_marker = cam_from_marker_i
//! ```
//!
//! Pairs of samples give motions `A X = X B` with `X = hand_from_marker`,
//! `A = hand_j^-1 * hand_i` and `B = marker_j^-1 * marker_i`. `X` is found
//! with the Park-Martin method; `cam_from_base` then follows from every
//! sample and is averaged.

use crate::geometry::{project_to_so3, Rotation, Transform, Vec3};
use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rotation angle below which a motion is treated as a pure translation.
const MIN_MOTION_ANGLE: f64 = 1e-6;
/// Minimum angle between two motion axes.
const MIN_AXIS_SEPARATION: f64 = 1e-6;
pub const MIN_SAMPLES: usize = 3;
pub const METHOD_LABEL: &str = "park-martin";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HandEyeError {
    #[error("insufficient motion: {0}")]
    InsufficientMotion(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandEyeSample {
    pub base_from_hand: Transform,
    pub cam_from_marker: Transform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    #[default]
    Consecutive,
    AllPairs,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HandEyeSolution {
    pub cam_from_base: Transform,
    pub hand_from_marker: Transform,
    /// Mean rotation residual over samples, radians.
    pub rotation_residual: f64,
    /// Mean translation residual over samples, meters.
    pub translation_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandEyeOutput {
    pub method: String,
    pub cam_from_base: Transform,
    pub hand_from_marker: Transform,
    pub rotation_residual_rad: f64,
    pub translation_residual_m: f64,
    pub n_samples: usize,
}

impl HandEyeOutput {
    pub fn new(sol: &HandEyeSolution, n_samples: usize) -> Self {
        HandEyeOutput {
            method: METHOD_LABEL.to_string(),
            cam_from_base: sol.cam_from_base,
            hand_from_marker: sol.hand_from_marker,
            rotation_residual_rad: sol.rotation_residual,
            translation_residual_m: sol.translation_residual,
            n_samples,
        }
    }
}

fn has_independent_axes(logs: &[Vec3]) -> bool {
    let axes: Vec<Vec3> = logs
        .iter()
        .filter(|v| v.norm() > MIN_MOTION_ANGLE)
        .map(|v| v.normalize())
        .collect();
    axes.iter().enumerate().any(|(i, a)| {
        axes[i + 1..]
            .iter()
            .any(|b| a.cross(b).norm().asin() > MIN_AXIS_SEPARATION)
    })
}

/// Least-squares `X` with `A_i X = X B_i` for each `(A_i, B_i)`.
pub fn solve_axxb(motions: &[(Transform, Transform)]) -> Result<Transform, HandEyeError> {
    if motions.len() < 2 {
        return Err(HandEyeError::InsufficientMotion(format!(
            "need at least 2 motion pairs, got {}",
            motions.len()
        )));
    }
    // Motions too close to a half turn have no stable log; they still enter
    // the translation system below.
    let (alphas, betas): (Vec<Vec3>, Vec<Vec3>) = motions
        .iter()
        .filter_map(|(a, b)| Some((a.rotation.log().ok()?, b.rotation.log().ok()?)))
        .unzip();
    if !has_independent_axes(&alphas) || !has_independent_axes(&betas) {
        return Err(HandEyeError::InsufficientMotion(
            "rotation axes are parallel; need two independent rotations".into(),
        ));
    }

    // R_X = argmin sum |R beta_i - alpha_i|^2 (orthogonal Procrustes).
    let mut m = Matrix3::zeros();
    for (a, b) in alphas.iter().zip(&betas) {
        m += a * b.transpose();
    }
    let rx = project_to_so3(&m);

    // (R_A - I) t_X = R_X t_B - t_A, stacked.
    let n = motions.len();
    let mut lhs = DMatrix::zeros(3 * n, 3);
    let mut rhs = DVector::zeros(3 * n);
    for (i, (a, b)) in motions.iter().enumerate() {
        let block = a.rotation.matrix() - Matrix3::identity();
        lhs.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&block);
        let r = rx * b.translation - a.translation;
        rhs.fixed_rows_mut::<3>(3 * i).copy_from(&r);
    }
    let t = lhs
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| HandEyeError::Numerical(e.to_string()))?;
    Ok(Transform::new(Rotation::from_matrix(&rx), Vec3::new(t[0], t[1], t[2])))
}

fn sample_pairs(n: usize, mode: PairMode) -> Vec<(usize, usize)> {
    match mode {
        PairMode::Consecutive => (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect(),
        PairMode::AllPairs => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
    }
}

/// Chordal mean of rigid transforms: SVD-projected mean rotation, mean translation.
fn average_transforms(ts: &[Transform]) -> Transform {
    let n = ts.len() as f64;
    let m: Matrix3<f64> = ts.iter().map(|t| t.rotation.matrix()).sum::<Matrix3<f64>>() / n;
    let t: Vec3 = ts.iter().map(|t| t.translation).sum::<Vec3>() / n;
    Transform::new(Rotation::from_matrix(&project_to_so3(&m)), t)
}

pub fn solve_eye_on_base(samples: &[HandEyeSample], mode: PairMode) -> Result<HandEyeSolution, HandEyeError> {
    if samples.len() < MIN_SAMPLES {
        return Err(HandEyeError::InsufficientMotion(format!(
            "need at least {MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let motions: Vec<(Transform, Transform)> = sample_pairs(samples.len(), mode)
        .into_iter()
        .map(|(i, j)| {
            let (si, sj) = (&samples[i], &samples[j]);
            let a = sj.base_from_hand.inverse().compose(&si.base_from_hand);
            let b = sj.cam_from_marker.inverse().compose(&si.cam_from_marker);
            (a, b)
        })
        .collect();
    let hand_from_marker = solve_axxb(&motions)?;
    let marker_from_hand = hand_from_marker.inverse();

    let per_sample: Vec<Transform> = samples
        .iter()
        .map(|s| {
            s.cam_from_marker
                .compose(&marker_from_hand)
                .compose(&s.base_from_hand.inverse())
        })
        .collect();
    let cam_from_base = average_transforms(&per_sample);

    let (mut rot_res, mut trans_res) = (0.0, 0.0);
    for s in samples {
        let predicted = cam_from_base.compose(&s.base_from_hand).compose(&hand_from_marker);
        rot_res += predicted.rotation_error(&s.cam_from_marker);
        trans_res += predicted.translation_error(&s.cam_from_marker);
    }
    let n = samples.len() as f64;
    Ok(HandEyeSolution {
        cam_from_base,
        hand_from_marker,
        rotation_residual: rot_res / n,
        translation_residual: trans_res / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng, max_angle: f64, max_t: f64) -> Transform {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Transform::new(
            Rotation::from_axis_angle(&axis, rng.random_range(0.05..max_angle)),
            Vec3::new(
                rng.random_range(-max_t..max_t),
                rng.random_range(-max_t..max_t),
                rng.random_range(-max_t..max_t),
            ),
        )
    }

    #[test]
    fn identical_motions_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let motions: Vec<_> = (0..4)
            .map(|_| {
                let a = random_transform(&mut rng, 2.5, 1.0);
                (a, a)
            })
            .collect();
        let x = solve_axxb(&motions).unwrap();
        assert!(x.translation.norm() < 1e-10);
        assert!(x.rotation.angle() < 1e-10);
    }

    #[test]
    fn recovers_constructed_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let x = random_transform(&mut rng, 3.0, 0.5);
            let motions: Vec<_> = (0..5)
                .map(|_| {
                    let b = random_transform(&mut rng, 2.0, 0.5);
                    (x.compose(&b).compose(&x.inverse()), b)
                })
                .collect();
            let est = solve_axxb(&motions).unwrap();
            assert!(est.translation_error(&x) < 1e-9);
            assert!(est.rotation_error(&x) < 1e-9);
        }
    }

    #[test]
    fn one_pair_is_insufficient() {
        let t = Transform::from_rotation(Rotation::from_rpy(0.3, 0.0, 0.0));
        assert!(matches!(
            solve_axxb(&[(t, t)]),
            Err(HandEyeError::InsufficientMotion(_))
        ));
    }

    #[test]
    fn parallel_axes_are_insufficient() {
        let r1 = Transform::from_rotation(Rotation::from_axis_angle(&Vec3::z(), 0.3));
        let r2 = Transform::new(Rotation::from_axis_angle(&Vec3::z(), 0.9), Vec3::new(0.1, 0.0, 0.0));
        assert!(matches!(
            solve_axxb(&[(r1, r1), (r2, r2)]),
            Err(HandEyeError::InsufficientMotion(_))
        ));
    }

    fn synthetic_samples(rng: &mut ChaCha8Rng, n: usize) -> (Transform, Transform, Vec<HandEyeSample>) {
        let cam_from_base = random_transform(rng, 3.0, 1.0);
        let hand_from_marker = random_transform(rng, 1.0, 0.1);
        let samples = (0..n)
            .map(|_| {
                let base_from_hand = random_transform(rng, 3.0, 0.6);
                HandEyeSample {
                    base_from_hand,
                    cam_from_marker: cam_from_base.compose(&base_from_hand).compose(&hand_from_marker),
                }
            })
            .collect();
        (cam_from_base, hand_from_marker, samples)
    }

    #[test]
    fn eye_on_base_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [PairMode::Consecutive, PairMode::AllPairs] {
            let (c, y, samples) = synthetic_samples(&mut rng, 6);
            let sol = solve_eye_on_base(&samples, mode).unwrap();
            assert!(sol.cam_from_base.translation_error(&c) < 1e-8);
            assert!(sol.cam_from_base.rotation_error(&c) < 1e-8);
            assert!(sol.hand_from_marker.translation_error(&y) < 1e-8);
            assert!(sol.rotation_residual < 1e-9);
            assert!(sol.translation_residual < 1e-9);
        }
    }

    #[test]
    fn two_samples_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (_, _, samples) = synthetic_samples(&mut rng, 2);
        assert!(matches!(
            solve_eye_on_base(&samples, PairMode::Consecutive),
            Err(HandEyeError::InsufficientMotion(_))
        ));
    }

    #[test]
    fn gauge_change_of_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (_, _, samples) = synthetic_samples(&mut rng, 5);
        let g = random_transform(&mut rng, 2.0, 1.0);
        let moved: Vec<_> = samples
            .iter()
            .map(|s| HandEyeSample {
                base_from_hand: g.compose(&s.base_from_hand),
                cam_from_marker: s.cam_from_marker,
            })
            .collect();
        let a = solve_eye_on_base(&samples, PairMode::Consecutive).unwrap();
        let b = solve_eye_on_base(&moved, PairMode::Consecutive).unwrap();
        let expected = a.cam_from_base.compose(&g.inverse());
        assert!(b.cam_from_base.translation_error(&expected) < 1e-8);
        assert!(b.cam_from_base.rotation_error(&expected) < 1e-8);
        assert!(b.hand_from_marker.translation_error(&a.hand_from_marker) < 1e-8);
    }

    #[test]
    fn order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (_, _, samples) = synthetic_samples(&mut rng, 6);
        let mut rev = samples.clone();
        rev.reverse();
        let a = solve_eye_on_base(&samples, PairMode::Consecutive).unwrap();
        let b = solve_eye_on_base(&rev, PairMode::Consecutive).unwrap();
        assert!(a.cam_from_base.translation_error(&b.cam_from_base) < 1e-9);
        assert!(a.cam_from_base.rotation_error(&b.cam_from_base) < 1e-9);
    }

    #[test]
    fn output_is_labelled() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (_, _, samples) = synthetic_samples(&mut rng, 4);
        let sol = solve_eye_on_base(&samples, PairMode::AllPairs).unwrap();
        let v = serde_json::to_value(HandEyeOutput::new(&sol, samples.len())).unwrap();
        assert_eq!(v["method"], "park-martin");
        assert!(v["cam_from_base"]["rotation_quat_wxyz"].is_array());
    }
}
