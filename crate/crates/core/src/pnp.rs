//! Camera pose from 2D-3D correspondences.
//!
//! Initialization is EPnP (four control points, barycentric coordinates,
//! null-space of the 12x12 system, best of the one/two/three-vector cases).
//! Coplanar point sets fall back to a homography decomposition, and sets of
//! four or five points also try three-point solutions on every triple. The estimate
//! is then polished by a damped Gauss-Newton minimization of the weighted
//! reprojection error.

use crate::beliefmap::KeypointDetection;
use crate::geometry::{project_to_so3, skew, CameraIntrinsics, Rotation, Transform, Vec2, Vec3, MIN_DEPTH};
use crate::kinematics::NamedPoint3;
use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, SymmetricEigen, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_POINTS: usize = 4;
/// Residual (pixels) charged to a point that falls behind the camera during refinement.
const BEHIND_CAMERA_PENALTY_PX: f64 = 1e4;
/// Relative spread of the smallest principal axis below which points are treated as coplanar.
const PLANAR_RATIO: f64 = 1e-3;
/// Relative spread of the middle principal axis below which points are collinear.
const COLLINEAR_RATIO: f64 = 1e-6;
/// Below this many points, three-point hypotheses compete with the EPnP estimate.
const MINIMAL_SOLVER_BELOW: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnpError {
    #[error("PnP needs at least {MIN_POINTS} correspondences, got {got}")]
    InsufficientPoints { got: usize },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("all points are behind the camera for the initial pose")]
    AllPointsBehindCamera,
    #[error("invalid correspondence: {0}")]
    InvalidCorrespondence(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p3d: Vec3,
    pub p2d: Vec2,
    pub weight: f64,
}

impl Correspondence {
    pub fn new(p3d: Vec3, p2d: Vec2) -> Self {
        Correspondence { p3d, p2d, weight: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PnpConfig {
    pub refine: bool,
    /// Use detection confidences as correspondence weights.
    pub confidence_weighting: bool,
    /// Huber threshold in pixels for robust refinement; `None` is plain least squares.
    pub huber_px: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for PnpConfig {
    fn default() -> Self {
        PnpConfig {
            refine: true,
            confidence_weighting: false,
            huber_px: None,
            max_iters: 50,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    /// `cam_from_base`.
    pub pose: Transform,
    pub reprojection_rmse: f64,
    pub n_points: usize,
    pub refined: bool,
    pub frames_used: usize,
    pub iterations: usize,
    /// Cost after each accepted refinement step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Pose output schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseOutput {
    pub rotation_quat_wxyz: [f64; 4],
    pub translation_m: [f64; 3],
    pub reprojection_rmse_px: f64,
    pub n_points: usize,
    pub frames_used: usize,
}

impl From<&PnpSolution> for PoseOutput {
    fn from(s: &PnpSolution) -> Self {
        let t = s.pose.translation;
        PoseOutput {
            rotation_quat_wxyz: s.pose.rotation.wxyz(),
            translation_m: [t.x, t.y, t.z],
            reprojection_rmse_px: s.reprojection_rmse,
            n_points: s.n_points,
            frames_used: s.frames_used,
        }
    }
}

impl PoseOutput {
    pub fn transform(&self) -> Result<Transform, crate::geometry::GeometryError> {
        let [w, x, y, z] = self.rotation_quat_wxyz;
        Ok(Transform::new(
            Rotation::from_wxyz(w, x, y, z)?,
            Vec3::from(self.translation_m),
        ))
    }
}

fn check_inputs(corrs: &[Correspondence]) -> Result<(), PnpError> {
    if corrs.len() < MIN_POINTS {
        return Err(PnpError::InsufficientPoints { got: corrs.len() });
    }
    for c in corrs {
        if !(c.p3d.iter().chain(c.p2d.iter()).all(|v| v.is_finite()) && c.weight.is_finite() && c.weight > 0.0) {
            return Err(PnpError::InvalidCorrespondence(format!("{c:?}")));
        }
    }
    Ok(())
}

/// Root-mean-square pixel reprojection error over all correspondences.
pub fn reprojection_rmse(pose: &Transform, corrs: &[Correspondence], k: &CameraIntrinsics) -> f64 {
    let sum: f64 = corrs
        .iter()
        .map(|c| {
            let pc = pose.apply(&c.p3d);
            match k.project_camera_point(&pc) {
                Ok(px) => (px - c.p2d).norm_squared(),
                Err(_) => BEHIND_CAMERA_PENALTY_PX * BEHIND_CAMERA_PENALTY_PX,
            }
        })
        .sum();
    (sum / corrs.len() as f64).sqrt()
}

fn weighted_sq_error(pose: &Transform, corrs: &[Correspondence], k: &CameraIntrinsics) -> f64 {
    corrs
        .iter()
        .map(|c| {
            let pc = pose.apply(&c.p3d);
            let e = match k.project_camera_point(&pc) {
                Ok(px) => (px - c.p2d).norm_squared(),
                Err(_) => BEHIND_CAMERA_PENALTY_PX * BEHIND_CAMERA_PENALTY_PX,
            };
            c.weight * e
        })
        .sum()
}

/// Least-squares rigid alignment `dst ≈ R src + t` (Kabsch).
fn align_rigid(src: &[Vec3], dst: &[Vec3]) -> Transform {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - cd) * (s - cs).transpose();
    }
    let r = project_to_so3(&h);
    let rot = Rotation::from_matrix(&r);
    Transform::new(rot, cd - rot.apply(&cs))
}

struct PrincipalAxes {
    centroid: Vec3,
    // Descending by variance.
    axes: [Vec3; 3],
    variances: [f64; 3],
}

fn principal_axes(points: &[Vec3]) -> PrincipalAxes {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes = order.map(|i| eig.eigenvectors.column(i).into_owned());
    let variances = order.map(|i| eig.eigenvalues[i].max(0.0));
    PrincipalAxes {
        centroid,
        axes,
        variances,
    }
}

/// Closed-form initial pose. Chooses EPnP or the planar homography route.
pub fn solve_epnp(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Transform, PnpError> {
    check_inputs(corrs)?;
    let pts: Vec<Vec3> = corrs.iter().map(|c| c.p3d).collect();
    let pa = principal_axes(&pts);
    let [s1, s2, s3] = pa.variances.map(f64::sqrt);
    if s1 <= 0.0 || s2 < COLLINEAR_RATIO * s1 {
        return Err(PnpError::DegenerateConfiguration(
            "3D points are collinear or coincident".into(),
        ));
    }
    if s3 < PLANAR_RATIO * s1 {
        return solve_planar(corrs, k, &pa);
    }
    epnp_general(corrs, k, &pa)
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn epnp_general(corrs: &[Correspondence], k: &CameraIntrinsics, pa: &PrincipalAxes) -> Result<Transform, PnpError> {
    let mut ctrl = [pa.centroid; 4];
    for j in 0..3 {
        ctrl[j + 1] = pa.centroid + pa.axes[j] * pa.variances[j].sqrt();
    }
    let basis = Matrix3::from_columns(&[ctrl[1] - ctrl[0], ctrl[2] - ctrl[0], ctrl[3] - ctrl[0]]);
    let basis_inv = basis
        .try_inverse()
        .ok_or_else(|| PnpError::DegenerateConfiguration("control points are singular".into()))?;

    let alphas: Vec<[f64; 4]> = corrs
        .iter()
        .map(|c| {
            let a = basis_inv * (c.p3d - ctrl[0]);
            [1.0 - a.x - a.y - a.z, a.x, a.y, a.z]
        })
        .collect();

    let mut mtm = SMatrix::<f64, 12, 12>::zeros();
    for (c, a) in corrs.iter().zip(&alphas) {
        let sw = c.weight.sqrt();
        let mut r1 = SMatrix::<f64, 1, 12>::zeros();
        let mut r2 = SMatrix::<f64, 1, 12>::zeros();
        for j in 0..4 {
            r1[3 * j] = sw * a[j] * k.fx;
            r1[3 * j + 2] = sw * a[j] * (k.cx - c.p2d.x);
            r2[3 * j + 1] = sw * a[j] * k.fy;
            r2[3 * j + 2] = sw * a[j] * (k.cy - c.p2d.y);
        }
        mtm += r1.transpose() * r1 + r2.transpose() * r2;
    }
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let kernel: Vec<SMatrix<f64, 12, 1>> = order[..3]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let rho: [f64; 6] = PAIRS.map(|(a, b)| (ctrl[a] - ctrl[b]).norm_squared());
    // diff[k][p] = control-point difference of kernel vector k for pair p.
    let diff: Vec<[Vec3; 6]> = kernel
        .iter()
        .map(|v| {
            PAIRS.map(|(a, b)| {
                Vec3::new(
                    v[3 * a] - v[3 * b],
                    v[3 * a + 1] - v[3 * b + 1],
                    v[3 * a + 2] - v[3 * b + 2],
                )
            })
        })
        .collect();

    let mut best: Option<(f64, Transform)> = None;
    for n in 1..=3 {
        let Some(mut betas) = initial_betas(n, &diff, &rho) else {
            continue;
        };
        refine_betas(&mut betas, &diff, &rho);
        let Some(pose) = pose_from_betas(&betas, &kernel, &alphas, corrs) else {
            continue;
        };
        let err = weighted_sq_error(&pose, corrs, k);
        // Strict comparison keeps the smaller case index on ties.
        if err.is_finite() && best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, pose));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| PnpError::DegenerateConfiguration("no EPnP case produced a pose".into()))
}

fn initial_betas(n: usize, diff: &[[Vec3; 6]], rho: &[f64; 6]) -> Option<Vec<f64>> {
    match n {
        1 => {
            let (mut num, mut den) = (0.0, 0.0);
            for p in 0..6 {
                let d = diff[0][p].norm();
                num += d * rho[p].sqrt();
                den += d * d;
            }
            (den > 0.0).then(|| vec![num / den])
        }
        2 | 3 => {
            // Unknowns are the products beta_a * beta_b for a <= b.
            let prods: Vec<(usize, usize)> = (0..n).flat_map(|a| (a..n).map(move |b| (a, b))).collect();
            let mut l = DMatrix::zeros(6, prods.len());
            for p in 0..6 {
                for (col, &(a, b)) in prods.iter().enumerate() {
                    let dot = diff[a][p].dot(&diff[b][p]);
                    l[(p, col)] = if a == b { dot } else { 2.0 * dot };
                }
            }
            let rhs = DVector::from_row_slice(rho);
            let sol = l.svd(true, true).solve(&rhs, 1e-12).ok()?;
            let idx = |a: usize, b: usize| prods.iter().position(|&q| q == (a, b)).unwrap();
            let b0 = sol[idx(0, 0)].abs().sqrt();
            let mut betas = vec![b0];
            for j in 1..n {
                let mag = sol[idx(j, j)].abs().sqrt();
                let sign = if sol[idx(0, j)] < 0.0 { -1.0 } else { 1.0 };
                betas.push(sign * mag);
            }
            Some(betas)
        }
        _ => None,
    }
}

/// Gauss-Newton on `sum_pairs (|sum_k beta_k diff_k|^2 - rho)^2`.
fn refine_betas(betas: &mut [f64], diff: &[[Vec3; 6]], rho: &[f64; 6]) {
    let n = betas.len();
    let residuals = |b: &[f64]| -> [f64; 6] {
        std::array::from_fn(|p| {
            let v: Vec3 = (0..n).map(|k| diff[k][p] * b[k]).sum();
            v.norm_squared() - rho[p]
        })
    };
    let sq = |r: &[f64; 6]| r.iter().map(|x| x * x).sum::<f64>();
    let mut r = residuals(betas);
    for _ in 0..10 {
        let mut jac = DMatrix::zeros(6, n);
        for p in 0..6 {
            let v: Vec3 = (0..n).map(|k| diff[k][p] * betas[k]).sum();
            for k in 0..n {
                jac[(p, k)] = 2.0 * v.dot(&diff[k][p]);
            }
        }
        let rhs = -DVector::from_row_slice(&r);
        let Ok(step) = jac.svd(true, true).solve(&rhs, 1e-14) else {
            return;
        };
        let cand: Vec<f64> = betas.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
        let rc = residuals(&cand);
        if sq(&rc) < sq(&r) {
            betas.copy_from_slice(&cand);
            r = rc;
        } else {
            return;
        }
    }
}

fn pose_from_betas(
    betas: &[f64],
    kernel: &[SMatrix<f64, 12, 1>],
    alphas: &[[f64; 4]],
    corrs: &[Correspondence],
) -> Option<Transform> {
    let x: SMatrix<f64, 12, 1> = betas
        .iter()
        .zip(kernel)
        .map(|(b, v)| v * *b)
        .fold(SMatrix::zeros(), |acc, v| acc + v);
    let ctrl_cam: [Vec3; 4] = std::array::from_fn(|j| Vec3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]));
    let mut cam: Vec<Vec3> = alphas
        .iter()
        .map(|a| (0..4).map(|j| ctrl_cam[j] * a[j]).sum())
        .collect();
    let negative = cam.iter().filter(|p| p.z < 0.0).count();
    if 2 * negative > cam.len() {
        cam.iter_mut().for_each(|p| *p = -*p);
    }
    if cam.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return None;
    }
    let world: Vec<Vec3> = corrs.iter().map(|c| c.p3d).collect();
    Some(align_rigid(&world, &cam))
}

/// Initialization for coplanar points via a plane-to-image homography.
fn solve_planar(corrs: &[Correspondence], k: &CameraIntrinsics, pa: &PrincipalAxes) -> Result<Transform, PnpError> {
    let e1 = pa.axes[0];
    let e2 = pa.axes[1];
    let normal = e1.cross(&e2);
    let base_from_plane = Transform::new(
        Rotation::from_matrix(&Matrix3::from_columns(&[e1, e2, normal])),
        pa.centroid,
    );
    let plane_from_base = base_from_plane.inverse();
    let src: Vec<Vec2> = corrs.iter().map(|c| plane_from_base.apply(&c.p3d).xy()).collect();
    let dst: Vec<Vec2> = corrs
        .iter()
        .map(|c| Vec2::new((c.p2d.x - k.cx) / k.fx, (c.p2d.y - k.cy) / k.fy))
        .collect();
    let weights: Vec<f64> = corrs.iter().map(|c| c.weight).collect();
    let h = homography_dlt(&src, &dst, &weights)
        .ok_or_else(|| PnpError::DegenerateConfiguration("homography estimation failed".into()))?;

    let h1 = h.column(0).into_owned();
    let h2 = h.column(1).into_owned();
    let h3 = h.column(2).into_owned();
    let mut scale = 2.0 / (h1.norm() + h2.norm());
    if h3.z * scale < 0.0 {
        scale = -scale;
    }
    let r1 = h1 * scale;
    let r2 = h2 * scale;
    let r = project_to_so3(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let cam_from_plane = Transform::new(Rotation::from_matrix(&r), h3 * scale);
    Ok(cam_from_plane.compose(&plane_from_base))
}

fn normalizing_transform(pts: &[Vec2]) -> Matrix3<f64> {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vec2>() / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Normalized DLT homography mapping `src` to `dst`.
fn homography_dlt(src: &[Vec2], dst: &[Vec2], weights: &[f64]) -> Option<Matrix3<f64>> {
    let ts = normalizing_transform(src);
    let td = normalizing_transform(dst);
    let n = src.len();
    let mut a = DMatrix::zeros(2 * n.max(5), 9);
    for i in 0..n {
        let s = ts * src[i].push(1.0);
        let d = td * dst[i].push(1.0);
        let (x, y) = (s.x / s.z, s.y / s.z);
        let (u, v) = (d.x / d.z, d.y / d.z);
        let w = weights[i].sqrt();
        let r1 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r2 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = w * r1[c];
            a[(2 * i + 1, c)] = w * r2[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let h = v_t.row(imin);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let out = td.try_inverse()? * hn * ts;
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn huber_weight(r: f64, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) if r > d => d / r,
        _ => 1.0,
    }
}

fn huber_cost(r: f64, delta: Option<f64>) -> f64 {
    match delta {
        Some(d) if r > d => d * (r - 0.5 * d),
        _ => 0.5 * r * r,
    }
}

fn robust_cost(pose: &Transform, corrs: &[Correspondence], k: &CameraIntrinsics, huber: Option<f64>) -> f64 {
    corrs
        .iter()
        .map(|c| {
            let pc = pose.apply(&c.p3d);
            let r = match k.project_camera_point(&pc) {
                Ok(px) => (px - c.p2d).norm(),
                Err(_) => BEHIND_CAMERA_PENALTY_PX,
            };
            c.weight * huber_cost(r, huber)
        })
        .sum()
}

/// Damped Gauss-Newton refinement of `initial` (cam_from_base).
///
/// Steps are accepted only when the cost decreases; the damping doubles on
/// every rejection.
pub fn refine(
    initial: &Transform,
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
) -> Result<PnpSolution, PnpError> {
    check_inputs(corrs)?;
    if !corrs.iter().any(|c| initial.apply(&c.p3d).z > MIN_DEPTH) {
        return Err(PnpError::AllPointsBehindCamera);
    }
    let huber = cfg.huber_px;
    let mut pose = *initial;
    let mut cost = robust_cost(&pose, corrs, k, huber);
    let mut history = vec![cost];
    let mut lambda: Option<f64> = None;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let mut h = Matrix6::<f64>::zeros();
        let mut g = Vector6::<f64>::zeros();
        for c in corrs {
            let pc = pose.apply(&c.p3d);
            if pc.z <= MIN_DEPTH {
                continue;
            }
            let px = k.project_camera_point(&pc).expect("depth checked");
            let r = px - c.p2d;
            let w = c.weight * huber_weight(r.norm(), huber);
            let iz = 1.0 / pc.z;
            let dproj = SMatrix::<f64, 2, 3>::new(
                k.fx * iz,
                0.0,
                -k.fx * pc.x * iz * iz,
                0.0,
                k.fy * iz,
                -k.fy * pc.y * iz * iz,
            );
            // d(pc)/d(omega) = -[R p]x, d(pc)/d(t) = I
            let rp = pc - pose.translation;
            let mut dpose = SMatrix::<f64, 3, 6>::zeros();
            dpose.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(&rp)));
            dpose.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
            let jac = dproj * dpose;
            h += jac.transpose() * jac * w;
            g += jac.transpose() * r * w;
        }
        if g.norm() < cfg.tol {
            break;
        }
        let diag_mean = h.diagonal().mean().max(1e-300);
        let mut lam = *lambda.get_or_insert(1e-4 * diag_mean);

        // Retry with increasing damping until the cost drops.
        let mut accepted = false;
        while iterations < cfg.max_iters {
            iterations += 1;
            let mut damped = h;
            for i in 0..6 {
                damped[(i, i)] += lam * (h[(i, i)] + 1e-12 * diag_mean);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-g))) else {
                lam *= 2.0;
                continue;
            };
            let omega = Vec3::new(step[0], step[1], step[2]);
            let dt = Vec3::new(step[3], step[4], step[5]);
            let cand = Transform::new(Rotation::exp(&omega).compose(&pose.rotation), pose.translation + dt);
            let cand_cost = robust_cost(&cand, corrs, k, huber);
            if cand_cost < cost {
                pose = cand;
                cost = cand_cost;
                history.push(cost);
                lam = (lam * 0.25).max(1e-15);
                accepted = true;
                if step.norm() < 1e-14 {
                    iterations = cfg.max_iters;
                }
                break;
            }
            lam *= 2.0;
            if lam > 1e12 {
                break;
            }
        }
        lambda = Some(lam);
        if !accepted {
            break;
        }
    }

    Ok(PnpSolution {
        pose,
        reprojection_rmse: reprojection_rmse(&pose, corrs, k),
        n_points: corrs.len(),
        refined: true,
        frames_used: 1,
        iterations,
        cost_history: history,
    })
}

/// Poses from every triple of correspondences, for point sets too small for
/// EPnP to be reliable.
fn minimal_candidates(corrs: &[Correspondence], k: &CameraIntrinsics) -> Vec<Transform> {
    let bearing = |c: &Correspondence| Vec3::new((c.p2d.x - k.cx) / k.fx, (c.p2d.y - k.cy) / k.fy, 1.0).normalize();
    let n = corrs.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let t = [&corrs[a], &corrs[b], &corrs[c]];
                out.extend(crate::p3p::solve(t.map(|c| c.p3d), t.map(bearing)));
            }
        }
    }
    out
}

fn canonical_order(corrs: &[Correspondence]) -> Vec<Correspondence> {
    let key = |c: &Correspondence| [c.p3d.x, c.p3d.y, c.p3d.z, c.p2d.x, c.p2d.y, c.weight];
    let mut sorted = corrs.to_vec();
    sorted.sort_by(|a, b| {
        key(a)
            .iter()
            .zip(key(b).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted
}

/// EPnP initialization followed by optional refinement. The result does not
/// depend on the order of `corrs`.
pub fn solve(corrs: &[Correspondence], k: &CameraIntrinsics, cfg: &PnpConfig) -> Result<PnpSolution, PnpError> {
    let corrs = &canonical_order(corrs);
    let mut init = solve_epnp(corrs, k)?;
    if corrs.len() < MINIMAL_SOLVER_BELOW {
        let mut best = weighted_sq_error(&init, corrs, k);
        for cand in minimal_candidates(corrs, k) {
            let err = weighted_sq_error(&cand, corrs, k);
            if err < best {
                best = err;
                init = cand;
            }
        }
    }
    if cfg.refine {
        refine(&init, corrs, k, cfg)
    } else {
        Ok(PnpSolution {
            pose: init,
            reprojection_rmse: reprojection_rmse(&init, corrs, k),
            n_points: corrs.len(),
            refined: false,
            frames_used: 1,
            iterations: 0,
            cost_history: Vec::new(),
        })
    }
}

/// Detections and base-frame keypoints of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub detections: Vec<KeypointDetection>,
    pub keypoints3d: Vec<NamedPoint3>,
}

/// Joins detections to keypoints by name, sorted by name so that input order
/// does not affect the result.
pub fn join_by_name(
    detections: &[KeypointDetection],
    keypoints3d: &[NamedPoint3],
    cfg: &PnpConfig,
) -> Vec<(String, Correspondence)> {
    let mut out: Vec<(String, Correspondence)> = detections
        .iter()
        .filter_map(|d| {
            let kp = keypoints3d.iter().find(|k| k.name == d.name)?;
            let weight = if cfg.confidence_weighting { d.confidence } else { 1.0 };
            Some((
                d.name.clone(),
                Correspondence {
                    p3d: kp.position,
                    p2d: d.pixel(),
                    weight,
                },
            ))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

pub fn solve_frame(
    detections: &[KeypointDetection],
    keypoints3d: &[NamedPoint3],
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
) -> Result<PnpSolution, PnpError> {
    let corrs: Vec<Correspondence> = join_by_name(detections, keypoints3d, cfg)
        .into_iter()
        .map(|(_, c)| c)
        .collect();
    solve(&corrs, k, cfg)
}

/// One PnP over the correspondences of every frame (static camera and base).
pub fn solve_multiframe(
    frames: &[FrameObservation],
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
) -> Result<PnpSolution, PnpError> {
    let corrs: Vec<Correspondence> = frames
        .iter()
        .flat_map(|f| join_by_name(&f.detections, &f.keypoints3d, cfg))
        .map(|(_, c)| c)
        .collect();
    let mut sol = solve(&corrs, k, cfg)?;
    sol.frames_used = frames.len();
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn truth() -> Transform {
        Transform::new(Rotation::from_rpy(0.3, -0.2, 0.5), Vec3::new(0.1, -0.05, 1.5))
    }

    fn cloud8() -> Vec<Vec3> {
        vec![
            Vec3::new(0.1, 0.2, 0.05),
            Vec3::new(-0.2, 0.1, -0.1),
            Vec3::new(0.15, -0.25, 0.2),
            Vec3::new(-0.1, -0.1, 0.3),
            Vec3::new(0.3, 0.05, -0.2),
            Vec3::new(-0.25, 0.3, 0.15),
            Vec3::new(0.0, 0.0, -0.3),
            Vec3::new(0.2, 0.3, 0.25),
        ]
    }

    fn observe(pose: &Transform, pts: &[Vec3]) -> Vec<Correspondence> {
        pts.iter()
            .map(|p| Correspondence::new(*p, crate::geometry::project(&k(), pose, p).unwrap()))
            .collect()
    }

    #[test]
    fn eight_points_exact() {
        let corrs = observe(&truth(), &cloud8());
        let sol = solve(&corrs, &k(), &PnpConfig::default()).unwrap();
        assert!(sol.pose.translation_error(&truth()) < 1e-5);
        assert!(sol.pose.rotation_error(&truth()) < 1e-6);
        let init = solve_epnp(&corrs, &k()).unwrap();
        assert!(init.translation_error(&truth()) < 1e-6);
    }

    #[test]
    fn planar_square_at_identity() {
        let square = [
            Vec3::new(-0.1, -0.1, 1.0),
            Vec3::new(0.1, -0.1, 1.0),
            Vec3::new(0.1, 0.1, 1.0),
            Vec3::new(-0.1, 0.1, 1.0),
        ];
        let corrs = observe(&Transform::identity(), &square);
        let sol = solve(&corrs, &k(), &PnpConfig::default()).unwrap();
        assert!(sol.pose.translation.norm() < 1e-6);
        assert!(sol.pose.rotation.angle() < 1e-6);
    }

    #[test]
    fn planar_general_pose() {
        let pts: Vec<Vec3> = (0..6)
            .map(|i| {
                let a = i as f64;
                Vec3::new(0.2 * a.cos(), 0.15 * (1.3 * a).sin(), 0.0)
            })
            .collect();
        let corrs = observe(&truth(), &pts);
        let init = solve_epnp(&corrs, &k()).unwrap();
        assert!(init.translation_error(&truth()) < 1e-6, "{init:?}");
        let sol = solve(&corrs, &k(), &PnpConfig::default()).unwrap();
        assert!(sol.pose.rotation_error(&truth()) < 1e-8);
    }

    #[test]
    fn four_points_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let pose = Transform::new(
                Rotation::from_rpy(
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-3.0..3.0),
                ),
                Vec3::new(
                    rng.random_range(-0.2..0.2),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(0.8..1.5),
                ),
            );
            let pts: Vec<Vec3> = (0..4)
                .map(|_| {
                    Vec3::new(
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                        rng.random_range(-0.3..0.3),
                    )
                })
                .collect();
            let sol = solve(&observe(&pose, &pts), &k(), &PnpConfig::default()).unwrap();
            assert!(sol.pose.translation_error(&pose) < 1e-6);
            assert!(sol.pose.rotation_error(&pose) < 1e-6);
        }
    }

    #[test]
    fn too_few_points() {
        let corrs = observe(&truth(), &cloud8()[..3]);
        assert_eq!(
            solve(&corrs, &k(), &PnpConfig::default()),
            Err(PnpError::InsufficientPoints { got: 3 })
        );
    }

    #[test]
    fn collinear_points_rejected() {
        let pts: Vec<Vec3> = (0..5).map(|i| Vec3::new(0.1 * i as f64, 0.0, 0.0)).collect();
        let corrs = observe(&truth(), &pts);
        assert!(matches!(
            solve_epnp(&corrs, &k()),
            Err(PnpError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn refine_from_truth_does_not_move() {
        let corrs = observe(&truth(), &cloud8());
        let sol = refine(&truth(), &corrs, &k(), &PnpConfig::default()).unwrap();
        assert!(sol.reprojection_rmse < 1e-9);
        assert!(sol.pose.translation_error(&truth()) < 1e-12);
    }

    #[test]
    fn refine_from_perturbed_pose() {
        let corrs = observe(&truth(), &cloud8());
        let delta = Transform::new(
            Rotation::from_axis_angle(&Vec3::new(1.0, 1.0, 0.0), 5f64.to_radians()),
            Vec3::new(0.05, 0.0, 0.0),
        );
        let sol = refine(&delta.compose(&truth()), &corrs, &k(), &PnpConfig::default()).unwrap();
        assert!(sol.pose.translation_error(&truth()) < 1e-6);
        assert!(sol.pose.rotation_error(&truth()) < 1e-6);
    }

    #[test]
    fn refinement_is_monotone_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let normal = rand_distr::Normal::new(0.0, 2.0).unwrap();
        let mut corrs = observe(&truth(), &cloud8());
        for c in &mut corrs {
            c.p2d += Vec2::new(rng.sample(normal), rng.sample(normal));
        }
        let init = solve_epnp(&corrs, &k()).unwrap();
        let before = reprojection_rmse(&init, &corrs, &k());
        let sol = refine(&init, &corrs, &k(), &PnpConfig::default()).unwrap();
        assert!(sol.reprojection_rmse <= before);
        assert!(sol.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn reported_rmse_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut corrs = observe(&truth(), &cloud8());
        for c in &mut corrs {
            c.p2d += Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let sol = solve(&corrs, &k(), &PnpConfig::default()).unwrap();
        let sum: f64 = corrs
            .iter()
            .map(|c| (crate::geometry::project(&k(), &sol.pose, &c.p3d).unwrap() - c.p2d).norm_squared())
            .sum();
        assert!(((sum / corrs.len() as f64).sqrt() - sol.reprojection_rmse).abs() < 1e-9);
    }

    #[test]
    fn all_points_behind_camera() {
        let corrs = observe(&truth(), &cloud8());
        let flipped = Transform::new(truth().rotation, Vec3::new(0.0, 0.0, -5.0));
        assert_eq!(
            refine(&flipped, &corrs, &k(), &PnpConfig::default()),
            Err(PnpError::AllPointsBehindCamera)
        );
    }

    #[test]
    fn huber_mode_resists_an_outlier() {
        let mut corrs = observe(&truth(), &cloud8());
        corrs[2].p2d += Vec2::new(60.0, -40.0);
        let plain = solve(&corrs, &k(), &PnpConfig::default()).unwrap();
        let robust = solve(
            &corrs,
            &k(),
            &PnpConfig {
                huber_px: Some(2.0),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(robust.pose.translation_error(&truth()) < plain.pose.translation_error(&truth()));
    }

    #[test]
    fn kabsch_recovers_rigid_motion() {
        let pts = cloud8();
        let moved: Vec<Vec3> = pts.iter().map(|p| truth().apply(p)).collect();
        let t = align_rigid(&pts, &moved);
        assert!(t.translation_error(&truth()) < 1e-12);
        assert!(t.rotation_error(&truth()) < 1e-12);
    }
}
