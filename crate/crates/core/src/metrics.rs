//! Keypoint and pose accuracy metrics, threshold curves, the frame-combination
//! sweep and workspace-error statistics.

use crate::geometry::{CameraIntrinsics, Transform, Vec2, Vec3};
use crate::handeye::{solve_eye_on_base, HandEyeSample, PairMode};
use crate::kinematics::KinematicChain;
use crate::pnp::{solve_multiframe, FrameObservation, PnpConfig};
use crate::synth::{stream_rng, FrameRecord};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const DEFAULT_PCK_THRESHOLDS_PX: [f64; 3] = [2.5, 5.0, 10.0];
pub const DEFAULT_ADD_THRESHOLDS_MM: [f64; 3] = [20.0, 40.0, 60.0];
pub const DEFAULT_PCK_AUC_MAX_PX: f64 = 12.0;
pub const DEFAULT_ADD_AUC_MAX_MM: f64 = 80.0;
pub const DEFAULT_N_CAP: usize = 2500;
/// Number of trapezoid intervals used for the AUC integral.
pub const AUC_GRID_STEPS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("nothing to evaluate: {0}")]
    EmptyEvaluation(String),
    #[error("solver {solver} cannot run with m = {m}: {reason}")]
    SolverUnavailableForM { solver: String, m: usize, reason: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Fraction of samples at or below each threshold, and the normalized area
/// under that curve on `[0, auc_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub thresholds: Vec<f64>,
    pub fraction: Vec<f64>,
    pub auc: f64,
    pub auc_max: f64,
    pub n_samples: usize,
}

impl Curve {
    pub fn is_monotone(&self) -> bool {
        self.fraction.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn fraction_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| *t == threshold)
            .map(|i| self.fraction[i])
    }
}

fn fraction_below(sorted: &[f64], tau: f64) -> f64 {
    sorted.partition_point(|e| *e <= tau) as f64 / sorted.len() as f64
}

/// Builds a threshold curve. NaN errors are treated as infinitely large.
pub fn curve_and_auc(samples: &[f64], thresholds: &[f64], auc_max: f64) -> Result<Curve, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyEvaluation("no samples".into()));
    }
    if !(auc_max > 0.0 && auc_max.is_finite()) {
        return Err(MetricsError::InvalidConfig("auc_max must be positive".into()));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds.iter().any(|t| t.is_nan()) {
        return Err(MetricsError::InvalidConfig(
            "thresholds must be strictly ascending".into(),
        ));
    }
    let mut sorted: Vec<f64> = samples
        .iter()
        .map(|e| if e.is_nan() { f64::INFINITY } else { *e })
        .collect();
    sorted.sort_by(f64::total_cmp);

    let fraction: Vec<f64> = thresholds.iter().map(|t| fraction_below(&sorted, *t)).collect();
    let step = auc_max / AUC_GRID_STEPS as f64;
    let grid: Vec<f64> = (0..=AUC_GRID_STEPS)
        .map(|i| fraction_below(&sorted, i as f64 * step))
        .collect();
    let area: f64 = grid.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / AUC_GRID_STEPS as f64;

    let curve = Curve {
        thresholds: thresholds.to_vec(),
        fraction,
        auc: area.clamp(0.0, 1.0),
        auc_max,
        n_samples: samples.len(),
    };
    assert!(curve.is_monotone(), "threshold curve must be monotone");
    Ok(curve)
}

/// Pixel errors of every counted keypoint of a frame.
///
/// A keypoint counts when its ground-truth pixel lies inside the image. A
/// counted keypoint without a detection has infinite error.
pub fn keypoint_errors(frame: &FrameRecord, k: &CameraIntrinsics) -> Vec<f64> {
    frame
        .gt_pixels
        .iter()
        .filter(|g| k.contains_pixel(&Vec2::from(g.pixel)))
        .map(|g| {
            frame
                .detections
                .iter()
                .find(|d| d.name == g.name)
                .map_or(f64::INFINITY, |d| (Vec2::from(d.pixel) - Vec2::from(g.pixel)).norm())
        })
        .collect()
}

/// Percentage of correct keypoints, pooled over frames.
pub fn pck(
    frames: &[FrameRecord],
    k: &CameraIntrinsics,
    thresholds: &[f64],
    auc_max: f64,
) -> Result<Curve, MetricsError> {
    let errors: Vec<f64> = frames.iter().flat_map(|f| keypoint_errors(f, k)).collect();
    if errors.is_empty() {
        return Err(MetricsError::EmptyEvaluation(
            "no keypoint has in-frustum ground truth".into(),
        ));
    }
    curve_and_auc(&errors, thresholds, auc_max)
}

/// Average distance between points mapped by two poses, in millimeters.
pub fn add_mm(est: &Transform, gt: &Transform, points: &[Vec3]) -> Result<f64, MetricsError> {
    if points.is_empty() {
        return Err(MetricsError::EmptyEvaluation("ADD needs at least one keypoint".into()));
    }
    let sum: f64 = points.iter().map(|p| (est.apply(p) - gt.apply(p)).norm()).sum();
    Ok(1000.0 * sum / points.len() as f64)
}

/// Per-frame ADD of one camera estimate against each frame's ground truth,
/// using the frame's forward-kinematics keypoints. Frames without ground truth
/// are skipped.
pub fn frame_adds_mm(
    chain: &KinematicChain,
    frames: &[FrameRecord],
    estimate: &Transform,
) -> Result<Vec<f64>, MetricsError> {
    frames
        .iter()
        .filter_map(|f| f.gt_cam_from_base.map(|gt| (f, gt)))
        .map(|(f, gt)| {
            let pts = fk_points(chain, f)?;
            add_mm(estimate, &gt, &pts)
        })
        .collect()
}

fn fk_points(chain: &KinematicChain, frame: &FrameRecord) -> Result<Vec<Vec3>, MetricsError> {
    let kps = chain
        .keypoint_positions(&frame.joint_config)
        .map_err(|e| MetricsError::InvalidConfig(e.to_string()))?;
    Ok(kps.into_iter().map(|p| p.position).collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepSolver {
    Dream,
    Hec,
}

impl SweepSolver {
    pub fn min_m(self) -> usize {
        match self {
            SweepSolver::Dream => 1,
            SweepSolver::Hec => crate::handeye::MIN_SAMPLES,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SweepSolver::Dream => "dream",
            SweepSolver::Hec => "hec",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Number of frames (or samples) combinations are drawn from.
    pub big_m: usize,
    pub m_values: Vec<usize>,
    pub n_cap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    /// `C(M, m)`, saturating.
    pub n_possible: u128,
    pub n_combinations_used: usize,
    pub n_failed: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub solver: SweepSolver,
    pub big_m: usize,
    pub n_cap: usize,
    pub seed: u64,
    pub rows: Vec<SweepRow>,
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn all_combinations(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..m).rev().find(|&i| idx[i] != i + n - m) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every `m`-subset of `0..n` when there are at most `n_cap` of them,
/// otherwise `n_cap` distinct subsets drawn with the seeded generator.
/// Subsets are sorted, and the list is in lexicographic order.
pub fn select_combinations(n: usize, m: usize, n_cap: usize, seed: u64) -> Vec<Vec<usize>> {
    if m == 0 || m > n {
        return Vec::new();
    }
    if binomial(n, m) <= n_cap as u128 {
        return all_combinations(n, m);
    }
    let mut rng = stream_rng(seed, m as u64);
    let mut chosen = BTreeSet::new();
    while chosen.len() < n_cap {
        let mut c = sample_indices(&mut rng, n, m).into_vec();
        c.sort_unstable();
        chosen.insert(c);
    }
    chosen.into_iter().collect()
}

/// Runs `eval` on frame-index combinations for every `m` and aggregates the
/// returned errors. `None` from `eval` marks a failed combination.
pub fn combination_sweep<F>(solver: SweepSolver, cfg: &SweepConfig, eval: F) -> Result<SweepResult, MetricsError>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    let SweepConfig {
        big_m,
        ref m_values,
        n_cap,
        seed,
    } = *cfg;
    if n_cap == 0 {
        return Err(MetricsError::InvalidConfig("n_cap must be positive".into()));
    }
    for &m in m_values {
        let reason = if m < solver.min_m() {
            Some(format!("needs m >= {}", solver.min_m()))
        } else if m > big_m {
            Some(format!("only {big_m} frames available"))
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(MetricsError::SolverUnavailableForM {
                solver: solver.label().into(),
                m,
                reason,
            });
        }
    }
    let rows = m_values
        .iter()
        .map(|&m| {
            let combos = select_combinations(big_m, m, n_cap, seed);
            let results: Vec<Option<f64>> = combos.par_iter().map(|c| eval(c)).collect();
            let mut ok: Vec<f64> = results.iter().flatten().copied().collect();
            ok.sort_by(f64::total_cmp);
            let stats = !ok.is_empty();
            SweepRow {
                m,
                n_possible: binomial(big_m, m),
                n_combinations_used: combos.len(),
                n_failed: combos.len() - ok.len(),
                mean: stats.then(|| mean(&ok)),
                median: stats.then(|| median_sorted(&ok)),
                min: ok.first().copied(),
                max: ok.last().copied(),
            }
        })
        .collect();
    Ok(SweepResult {
        solver,
        big_m,
        n_cap,
        seed,
        rows,
    })
}

type GroundTruth = Vec<(Transform, Vec<Vec3>)>;

fn ground_truth(chain: &KinematicChain, frames: &[FrameRecord]) -> Result<GroundTruth, MetricsError> {
    let gt: GroundTruth = frames
        .iter()
        .filter_map(|f| f.gt_cam_from_base.map(|gt| (f, gt)))
        .map(|(f, gt)| Ok((gt, fk_points(chain, f)?)))
        .collect::<Result<_, MetricsError>>()?;
    if gt.is_empty() {
        return Err(MetricsError::EmptyEvaluation("no frame has a ground-truth pose".into()));
    }
    Ok(gt)
}

/// Mean per-frame ADD of one estimate, in millimeters.
fn score(gt: &GroundTruth, est: &Transform) -> Option<f64> {
    let adds: Vec<f64> = gt.iter().filter_map(|(g, pts)| add_mm(est, g, pts).ok()).collect();
    (!adds.is_empty()).then(|| mean(&adds))
}

/// Sweep of the multi-frame keypoint solver. Each combination's estimate is
/// scored by ADD over all `big_m` frames.
pub fn dream_sweep(
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    frames: &[FrameRecord],
    cfg: &SweepConfig,
    pnp: &PnpConfig,
) -> Result<SweepResult, MetricsError> {
    let big_m = cfg.big_m;
    if big_m > frames.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: big_m,
            got: frames.len(),
        });
    }
    let frames = &frames[..big_m];
    let observations: Vec<FrameObservation> = frames
        .iter()
        .map(|f| {
            Ok(FrameObservation {
                detections: f.keypoint_detections(),
                keypoints3d: chain
                    .keypoint_positions(&f.joint_config)
                    .map_err(|e| MetricsError::InvalidConfig(e.to_string()))?,
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    let gt = ground_truth(chain, frames)?;
    combination_sweep(SweepSolver::Dream, cfg, |combo| {
        let chosen: Vec<FrameObservation> = combo.iter().map(|&i| observations[i].clone()).collect();
        let sol = solve_multiframe(&chosen, k, pnp).ok()?;
        score(&gt, &sol.pose)
    })
}

/// Sweep of the hand-eye baseline. `samples[i]` must be recorded at
/// `frames[i].joint_config`; frames supply the ground truth for scoring.
pub fn hec_sweep(
    chain: &KinematicChain,
    samples: &[HandEyeSample],
    frames: &[FrameRecord],
    cfg: &SweepConfig,
) -> Result<SweepResult, MetricsError> {
    let big_m = cfg.big_m;
    for len in [samples.len(), frames.len()] {
        if big_m > len {
            return Err(MetricsError::DimensionMismatch {
                expected: big_m,
                got: len,
            });
        }
    }
    let gt = ground_truth(chain, &frames[..big_m])?;
    combination_sweep(SweepSolver::Hec, cfg, |combo| {
        let chosen: Vec<HandEyeSample> = combo.iter().map(|&i| samples[i]).collect();
        let sol = solve_eye_on_base(&chosen, PairMode::AllPairs).ok()?;
        score(&gt, &sol.cam_from_base)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

impl ErrorStats {
    pub fn from_samples(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let m = mean(v);
        let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
        Some(ErrorStats {
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: m,
            std: var.sqrt(),
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodErrors {
    pub method: String,
    /// Millimeters.
    pub errors: ErrorStats,
}

/// Maps camera-frame targets into the base frame with each method's
/// `cam_from_base` estimate and compares them to the reference positions.
pub fn workspace_error_report(
    estimates: &[(String, Transform)],
    targets_cam: &[Vec3],
    reference_base: &[Vec3],
) -> Result<Vec<MethodErrors>, MetricsError> {
    if targets_cam.len() != reference_base.len() {
        return Err(MetricsError::DimensionMismatch {
            expected: targets_cam.len(),
            got: reference_base.len(),
        });
    }
    if targets_cam.is_empty() {
        return Err(MetricsError::EmptyEvaluation("no workspace targets".into()));
    }
    Ok(estimates
        .iter()
        .map(|(method, cam_from_base)| {
            let base_from_cam = cam_from_base.inverse();
            let errs: Vec<f64> = targets_cam
                .iter()
                .zip(reference_base)
                .map(|(p, r)| 1000.0 * (base_from_cam.apply(p) - r).norm())
                .collect();
            MethodErrors {
                method: method.clone(),
                errors: ErrorStats::from_samples(&errs).expect("non-empty"),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub pck_thresholds_px: Vec<f64>,
    pub add_thresholds_mm: Vec<f64>,
    pub pck_auc_max_px: f64,
    pub add_auc_max_mm: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pck_thresholds_px: DEFAULT_PCK_THRESHOLDS_PX.to_vec(),
            add_thresholds_mm: DEFAULT_ADD_THRESHOLDS_MM.to_vec(),
            pck_auc_max_px: DEFAULT_PCK_AUC_MAX_PX,
            add_auc_max_mm: DEFAULT_ADD_AUC_MAX_MM,
        }
    }
}

/// One row in the layout of a results table: PCK columns, PCK AUC, ADD
/// columns, ADD AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub columns: Vec<String>,
    pub values: Vec<f64>,
}

fn fmt_threshold(t: f64) -> String {
    format!("{t:?}")
}

impl TableRow {
    pub fn new(method: &str, pck: &Curve, add: &Curve) -> Self {
        let mut columns = Vec::new();
        let mut values = Vec::new();
        for (t, f) in pck.thresholds.iter().zip(&pck.fraction) {
            columns.push(format!("PCK@{}px", fmt_threshold(*t)));
            values.push(*f);
        }
        columns.push("PCK_AUC".into());
        values.push(pck.auc);
        for (t, f) in add.thresholds.iter().zip(&add.fraction) {
            columns.push(format!("ADD@{}mm", fmt_threshold(*t)));
            values.push(*f);
        }
        columns.push("ADD_AUC".into());
        values.push(add.auc);
        TableRow {
            method: method.to_string(),
            columns,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: EvalConfig,
    pub n_frames: usize,
    pub n_keypoints_counted: usize,
    pub pck: Curve,
    pub add: Curve,
    /// ADD in millimeters of each frame with ground truth, in frame order;
    /// `None` where no estimate was available.
    pub add_per_frame_mm: Vec<Option<f64>>,
    pub table: Vec<TableRow>,
}

/// Camera estimates to score: one shared by every frame, or one per frame
/// where `None` marks a frame the solver failed on.
#[derive(Debug, Clone, PartialEq)]
pub enum PoseEstimates {
    Shared(Transform),
    PerFrame(Vec<Option<Transform>>),
}

/// PCK of the frames' detections and ADD of the pose estimates. A frame
/// without an estimate has infinite ADD.
pub fn evaluate(
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    frames: &[FrameRecord],
    poses: &PoseEstimates,
    method: &str,
    cfg: &EvalConfig,
) -> Result<EvaluationReport, MetricsError> {
    if let PoseEstimates::PerFrame(v) = poses {
        if v.len() != frames.len() {
            return Err(MetricsError::DimensionMismatch {
                expected: frames.len(),
                got: v.len(),
            });
        }
    }
    let pck_curve = pck(frames, k, &cfg.pck_thresholds_px, cfg.pck_auc_max_px)?;
    let mut adds = Vec::new();
    for (i, f) in frames.iter().enumerate() {
        let Some(gt) = f.gt_cam_from_base else { continue };
        let est = match poses {
            PoseEstimates::Shared(t) => Some(t),
            PoseEstimates::PerFrame(v) => v[i].as_ref(),
        };
        adds.push(match est {
            Some(est) => add_mm(est, &gt, &fk_points(chain, f)?)?,
            None => f64::INFINITY,
        });
    }
    if adds.is_empty() {
        return Err(MetricsError::EmptyEvaluation("no frame has a ground-truth pose".into()));
    }
    let add_curve = curve_and_auc(&adds, &cfg.add_thresholds_mm, cfg.add_auc_max_mm)?;
    let table = vec![TableRow::new(method, &pck_curve, &add_curve)];
    Ok(EvaluationReport {
        config: cfg.clone(),
        n_frames: frames.len(),
        n_keypoints_counted: pck_curve.n_samples,
        pck: pck_curve,
        add: add_curve,
        add_per_frame_mm: adds.iter().map(|a| a.is_finite().then_some(*a)).collect(),
        table,
    })
}
