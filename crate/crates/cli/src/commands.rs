use crate::error::{CliError, EXIT_PRECONDITION};
use crate::run::{manifest_path_for, Run};
use camrobot::beliefmap::{
    extract_all, read_bmap, write_bmap, BmapSidecar, KeypointDetection, MapScale, PeakExtractConfig,
};
use camrobot::handeye::{solve_eye_on_base, HandEyeOutput, HandEyeSample, PairMode};
use camrobot::kinematics::KinematicChain;
use camrobot::metrics::{
    dream_sweep, evaluate, hec_sweep, workspace_error_report, Curve, EvalConfig, EvaluationReport, MethodErrors,
    PoseEstimates, SweepConfig, SweepResult, SweepSolver,
};
use camrobot::pnp::{solve_frame, solve_multiframe, FrameObservation, PnpConfig, PoseOutput};
use camrobot::synth::{
    generate_dataset, generate_handeye_samples, render_frame_belief_maps, workspace_targets, CameraMode,
    CameraShellConfig, ChainRef, Dataset, FrameRecord, GenerateOptions, NoiseConfig, PoseNoise,
};
use camrobot::{CameraIntrinsics, Transform, Vec3};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DATASET_FILE: &str = "dataset.json";
pub const HANDEYE_FILE: &str = "handeye_samples.json";
pub const BELIEF_DIR: &str = "belief_maps";
pub const DEFAULT_M_RANGE: &str = "1,3,6,9,12,18";
/// Marker mounted 5 cm beyond the hand flange unless configured otherwise.
const DEFAULT_MARKER_OFFSET_M: [f64; 3] = [0.0, 0.0, 0.05];

pub fn bmap_name(index: usize) -> String {
    format!("frame_{index:06}.bmap")
}

fn sidecar_path(bmap: &Path) -> PathBuf {
    bmap.with_extension("json")
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Refine the closed-form pose by minimizing reprojection error (default).
    #[arg(long, overrides_with = "no_refine")]
    pub refine: bool,
    /// Report the closed-form pose without refinement.
    #[arg(long)]
    pub no_refine: bool,
    /// Huber threshold in pixels for robust refinement.
    #[arg(long)]
    pub huber_px: Option<f64>,
    /// Weight correspondences by detection confidence.
    #[arg(long)]
    pub confidence_weighting: bool,
    #[arg(long, default_value_t = 50)]
    pub max_iters: usize,
}

impl SolverArgs {
    fn config(&self) -> Result<PnpConfig, CliError> {
        if let Some(h) = self.huber_px {
            if !(h > 0.0 && h.is_finite()) {
                return Err(CliError::argument("--huber-px must be positive"));
            }
        }
        Ok(PnpConfig {
            refine: !self.no_refine,
            confidence_weighting: self.confidence_weighting,
            huber_px: self.huber_px,
            max_iters: self.max_iters,
            ..PnpConfig::default()
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PeakArgs {
    /// Minimum smoothed belief for a peak to count as a detection.
    #[arg(long, default_value_t = 0.03)]
    pub peak_threshold: f64,
    /// Smoothing applied before peak search, in map pixels.
    #[arg(long, default_value_t = 1.0)]
    pub smooth_sigma: f64,
    /// Chebyshev radius of the centroid window, in map pixels.
    #[arg(long, default_value_t = 6)]
    pub window_radius: usize,
}

impl PeakArgs {
    fn config(&self) -> Result<PeakExtractConfig, CliError> {
        let cfg = PeakExtractConfig {
            peak_threshold: self.peak_threshold,
            smooth_sigma: self.smooth_sigma,
            window_radius: self.window_radius,
        };
        cfg.validate().map_err(CliError::argument)?;
        Ok(cfg)
    }
}

fn read_frames(run: &mut Run, path: &Path) -> Result<Vec<FrameRecord>, CliError> {
    run.read_list(path, "frames")
}

fn read_stack_detections(
    run: &mut Run,
    bmap: &Path,
    k: &CameraIntrinsics,
    cfg: &PeakExtractConfig,
) -> Result<(Vec<KeypointDetection>, Vec<String>), CliError> {
    let sidecar_file = sidecar_path(bmap);
    let sidecar: BmapSidecar = run.read_json(&sidecar_file)?;
    let bytes = run.read(bmap)?;
    let stack = read_bmap(bytes.as_slice(), &sidecar).map_err(|e| CliError::parse(bmap, e))?;
    let (w, h) = sidecar.alpha.map_dims(k.width, k.height)?;
    if let Some(m) = stack.maps.first() {
        if (m.width, m.height) != (w, h) {
            return Err(CliError::parse(
                bmap,
                format!("maps are {}x{}, expected {w}x{h} for this camera", m.width, m.height),
            ));
        }
    }
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for (name, det) in extract_all(&stack, cfg) {
        match det {
            Some(d) => found.push(d),
            None => missing.push(name),
        }
    }
    Ok((found, missing))
}

fn observations(
    run: &mut Run,
    chain: &KinematicChain,
    k: &CameraIntrinsics,
    frames: &[FrameRecord],
    belief_dir: Option<&Path>,
    peak: &PeakExtractConfig,
) -> Result<Vec<FrameObservation>, CliError> {
    frames
        .iter()
        .map(|f| {
            chain.check_config(&f.joint_config, false)?;
            let detections = match belief_dir {
                Some(dir) => read_stack_detections(run, &dir.join(bmap_name(f.index)), k, peak)?.0,
                None => f.keypoint_detections(),
            };
            Ok(FrameObservation {
                detections,
                keypoints3d: chain.keypoint_positions(&f.joint_config)?,
            })
        })
        .collect()
}

// --- calibrate -------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Dataset JSON or a bare array of frame records.
    #[arg(long)]
    pub frames: PathBuf,
    /// Directory of `frame_NNNNNN.bmap` stacks to extract detections from.
    #[arg(long)]
    pub belief_maps: Option<PathBuf>,
    /// Solve one pose from all frames together (stationary camera).
    #[arg(long)]
    pub multiframe: bool,
    /// Record per-frame failures instead of aborting.
    #[arg(long)]
    pub skip_failed: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub peak: PeakArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FramePose {
    pub index: usize,
    #[serde(flatten)]
    pub pose: Option<PoseOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<CliError>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationOutput {
    pub mode: &'static str,
    #[serde(flatten)]
    pub pose: Option<PoseOutput>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub frames: Vec<FramePose>,
}

pub fn calibrate(args: &CalibrateArgs) -> Result<(), CliError> {
    let mut run = Run::new("calibrate", args, None);
    let pnp = args.solver.config()?;
    let peak = args.peak.config()?;
    let chain = run.read_chain(&args.chain)?;
    let k = run.read_intrinsics(&args.intrinsics)?;
    let frames = read_frames(&mut run, &args.frames)?;
    let obs = observations(&mut run, &chain, &k, &frames, args.belief_maps.as_deref(), &peak)?;

    let output = if args.multiframe {
        let sol = solve_multiframe(&obs, &k, &pnp)?;
        CalibrationOutput {
            mode: "multiframe",
            pose: Some(PoseOutput::from(&sol)),
            frames: Vec::new(),
        }
    } else {
        let results: Vec<_> = obs
            .par_iter()
            .map(|o| solve_frame(&o.detections, &o.keypoints3d, &k, &pnp))
            .collect();
        let mut poses = Vec::with_capacity(results.len());
        for (f, r) in frames.iter().zip(results) {
            match r {
                Ok(sol) => poses.push(FramePose {
                    index: f.index,
                    pose: Some(PoseOutput::from(&sol)),
                    error: None,
                }),
                Err(e) if args.skip_failed => poses.push(FramePose {
                    index: f.index,
                    pose: None,
                    error: Some(e.into()),
                }),
                Err(e) => {
                    let mut err = CliError::from(e);
                    err.message = format!("frame {}: {}", f.index, err.message);
                    return Err(err);
                }
            }
        }
        CalibrationOutput {
            mode: "single-frame",
            pose: None,
            frames: poses,
        }
    };
    run.write_json(&args.out, &output)?;
    run.finish(&manifest_path_for(&args.out))
}

// --- extract ---------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    /// BMAP file; its JSON sidecar is expected next to it with a `.json` extension.
    #[arg(long)]
    pub bmap: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[command(flatten)]
    pub peak: PeakArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractOutput {
    pub detections: Vec<KeypointDetection>,
    pub missing: Vec<String>,
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    let mut run = Run::new("extract", args, None);
    let peak = args.peak.config()?;
    let k = run.read_intrinsics(&args.intrinsics)?;
    let (detections, missing) = read_stack_detections(&mut run, &args.bmap, &k, &peak)?;
    run.write_json(&args.out, &ExtractOutput { detections, missing })?;
    run.finish(&manifest_path_for(&args.out))
}

// --- evaluate --------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// One `cam_from_base` pose applied to every frame.
    #[arg(
        long,
        conflicts_with = "per_frame_poses",
        required_unless_present = "per_frame_poses"
    )]
    pub pose: Option<PathBuf>,
    /// Single-frame calibrate output with one pose per frame.
    #[arg(long)]
    pub per_frame_poses: Option<PathBuf>,
    #[arg(long, default_value = "estimate")]
    pub method: String,
    #[arg(long, value_delimiter = ',', default_values_t = camrobot::metrics::DEFAULT_PCK_THRESHOLDS_PX)]
    pub pck_thresholds: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = camrobot::metrics::DEFAULT_ADD_THRESHOLDS_MM)]
    pub add_thresholds: Vec<f64>,
    #[arg(long, default_value_t = camrobot::metrics::DEFAULT_PCK_AUC_MAX_PX)]
    pub pck_auc_max: f64,
    #[arg(long, default_value_t = camrobot::metrics::DEFAULT_ADD_AUC_MAX_MM)]
    pub add_auc_max: f64,
    #[arg(long)]
    pub report: PathBuf,
    /// Table row as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Curve points as CSV (`metric,threshold,fraction`).
    #[arg(long)]
    pub curves_csv: Option<PathBuf>,
}

fn per_frame_poses(run: &mut Run, path: &Path, frames: &[FrameRecord]) -> Result<Vec<Option<Transform>>, CliError> {
    let entries: Vec<serde_json::Value> = run.read_list(path, "frames")?;
    let mut by_index = std::collections::BTreeMap::new();
    for e in entries {
        let index = e
            .get("index")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| CliError::parse(path, "pose entry without index"))? as usize;
        by_index.insert(index, serde_json::from_value::<Transform>(e).ok());
    }
    Ok(frames
        .iter()
        .map(|f| by_index.get(&f.index).copied().flatten())
        .collect())
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| CliError::new("Io", e, crate::error::EXIT_IO);
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| CliError::new("Io", e, crate::error::EXIT_IO))
}

pub fn table_csv(report: &EvaluationReport) -> Result<Vec<u8>, CliError> {
    let mut header = vec!["method".to_string()];
    header.extend(report.table[0].columns.iter().cloned());
    let rows: Vec<Vec<String>> = report
        .table
        .iter()
        .map(|r| {
            std::iter::once(r.method.clone())
                .chain(r.values.iter().map(|v| v.to_string()))
                .collect()
        })
        .collect();
    csv_bytes(&header, &rows)
}

fn curves_csv(report: &EvaluationReport) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = ["metric", "threshold", "fraction"].map(String::from).to_vec();
    let rows_for = |name: &str, c: &Curve| -> Vec<Vec<String>> {
        c.thresholds
            .iter()
            .zip(&c.fraction)
            .map(|(t, f)| vec![name.to_string(), t.to_string(), f.to_string()])
            .collect()
    };
    let mut rows = rows_for("pck_px", &report.pck);
    rows.extend(rows_for("add_mm", &report.add));
    csv_bytes(&header, &rows)
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    let mut run = Run::new("evaluate", args, None);
    let chain = run.read_chain(&args.chain)?;
    let k = run.read_intrinsics(&args.intrinsics)?;
    let frames = read_frames(&mut run, &args.dataset)?;
    let poses = match (&args.pose, &args.per_frame_poses) {
        (Some(p), _) => PoseEstimates::Shared(run.read_json(p)?),
        (None, Some(p)) => PoseEstimates::PerFrame(per_frame_poses(&mut run, p, &frames)?),
        (None, None) => return Err(CliError::argument("one of --pose or --per-frame-poses is required")),
    };
    let cfg = EvalConfig {
        pck_thresholds_px: args.pck_thresholds.clone(),
        add_thresholds_mm: args.add_thresholds.clone(),
        pck_auc_max_px: args.pck_auc_max,
        add_auc_max_mm: args.add_auc_max,
    };
    let report = evaluate(&chain, &k, &frames, &poses, &args.method, &cfg)?;
    run.write_json(&args.report, &report)?;
    if let Some(p) = &args.csv {
        run.write(p, &table_csv(&report)?)?;
    }
    if let Some(p) = &args.curves_csv {
        run.write(p, &curves_csv(&report)?)?;
    }
    run.finish(&manifest_path_for(&args.report))
}

// --- sweep -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Dream,
    Hec,
}

impl From<SolverKind> for SweepSolver {
    fn from(s: SolverKind) -> Self {
        match s {
            SolverKind::Dream => SweepSolver::Dream,
            SolverKind::Hec => SweepSolver::Hec,
        }
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_m_values(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::argument(format!("invalid m range {s:?}; use a..b or a,b,c"));
    let mut v: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    v.sort_unstable();
    v.dedup();
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

fn check_m_values(solver: SweepSolver, m_values: &[usize]) -> Result<(), CliError> {
    match m_values.iter().find(|&&m| m < solver.min_m()) {
        Some(&m) => Err(CliError::new(
            "SolverUnavailableForM",
            format!(
                "solver {} cannot run with m = {m}: needs m >= {}",
                solver.label(),
                solver.min_m()
            ),
            EXIT_PRECONDITION,
        )),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum)]
    pub solver: SolverKind,
    /// Marker observations recorded at the dataset's joint configurations.
    #[arg(long, required_if_eq("solver", "hec"))]
    pub hec_samples: Option<PathBuf>,
    /// Frame counts to evaluate: `a..b` or `a,b,c`.
    #[arg(long, default_value = DEFAULT_M_RANGE)]
    pub m_range: String,
    /// Number of frames combinations are drawn from (default: all, at most 18).
    #[arg(long)]
    pub big_m: Option<usize>,
    #[arg(long, default_value_t = camrobot::metrics::DEFAULT_N_CAP)]
    pub n_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver_args: SolverArgs,
    /// Output CSV with one row per m.
    #[arg(long)]
    pub out: PathBuf,
    /// Full result as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_csv(result: &SweepResult) -> Result<Vec<u8>, CliError> {
    let header: Vec<String> = ["m", "mean", "median", "min", "max", "n_used", "n_failed", "n_possible"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                opt(r.mean),
                opt(r.median),
                opt(r.min),
                opt(r.max),
                r.n_combinations_used.to_string(),
                r.n_failed.to_string(),
                r.n_possible.to_string(),
            ]
        })
        .collect();
    csv_bytes(&header, &rows)
}

fn default_big_m(n: usize) -> usize {
    n.min(18)
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let solver = SweepSolver::from(args.solver);
    let m_values = parse_m_values(&args.m_range)?;
    check_m_values(solver, &m_values)?;
    let mut run = Run::new("sweep", args, Some(args.seed));
    let pnp = args.solver_args.config()?;
    let chain = run.read_chain(&args.chain)?;
    let k = run.read_intrinsics(&args.intrinsics)?;
    let frames = read_frames(&mut run, &args.dataset)?;
    let cfg = SweepConfig {
        big_m: args.big_m.unwrap_or(default_big_m(frames.len())),
        m_values,
        n_cap: args.n_cap,
        seed: args.seed,
    };
    let result = match args.solver {
        SolverKind::Dream => dream_sweep(&chain, &k, &frames, &cfg, &pnp)?,
        SolverKind::Hec => {
            let path = args
                .hec_samples
                .as_ref()
                .ok_or_else(|| CliError::argument("--hec-samples is required for --solver hec"))?;
            let samples: Vec<HandEyeSample> = run.read_list(path, "samples")?;
            hec_sweep(&chain, &samples, &frames, &cfg)?
        }
    };
    run.write(&args.out, &sweep_csv(&result)?)?;
    if let Some(p) = &args.json {
        run.write_json(p, &result)?;
    }
    run.finish(&manifest_path_for(&args.out))
}

// --- handeye ---------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum PairArg {
    Consecutive,
    AllPairs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct HandEyeArgs {
    /// JSON array of `{base_from_hand, cam_from_marker}` samples.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(long, value_enum, default_value = "consecutive")]
    pub pairs: PairArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn handeye(args: &HandEyeArgs) -> Result<(), CliError> {
    let mut run = Run::new("handeye", args, None);
    let samples: Vec<HandEyeSample> = run.read_list(&args.samples, "samples")?;
    let mode = match args.pairs {
        PairArg::Consecutive => PairMode::Consecutive,
        PairArg::AllPairs => PairMode::AllPairs,
    };
    let sol = solve_eye_on_base(&samples, mode)?;
    run.write_json(&args.out, &HandEyeOutput::new(&sol, samples.len()))?;
    run.finish(&manifest_path_for(&args.out))
}

// --- synth -----------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum CameraModeArg {
    Static,
    PerFrame,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Camera shell configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub shell_config: Option<PathBuf>,
    /// Detection noise configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub noise_config: Option<PathBuf>,
    #[arg(long)]
    pub frames: usize,
    #[arg(long, value_enum, default_value = "static")]
    pub camera_mode: CameraModeArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Render a belief-map stack at each frame's detections.
    #[arg(long)]
    pub emit_belief_maps: bool,
    /// Belief-map resolution relative to the image: 1, 0.5 or 0.25.
    #[arg(long, default_value_t = 1.0)]
    pub map_scale: f64,
    /// Also simulate marker observations at every frame's joint configuration.
    #[arg(long)]
    pub emit_handeye: bool,
    /// Link carrying the marker (default: last link).
    #[arg(long)]
    pub hand_link: Option<usize>,
    /// `hand_from_marker` pose JSON.
    #[arg(long)]
    pub marker_offset: Option<PathBuf>,
    /// Per-axis marker rotation noise, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub marker_noise_deg: f64,
    /// Per-axis marker translation noise, meters.
    #[arg(long, default_value_t = 0.0)]
    pub marker_noise_m: f64,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    if args.emit_handeye && args.camera_mode == CameraModeArg::PerFrame {
        return Err(CliError::argument("--emit-handeye requires --camera-mode static"));
    }
    let mut run = Run::new("synth", args, Some(args.seed));
    let chain_bytes = run.read(&args.chain)?;
    let chain_text = String::from_utf8(chain_bytes.clone()).map_err(|e| CliError::parse(&args.chain, e))?;
    let chain = camrobot::kinematics::load_chain(&chain_text).map_err(|e| CliError::parse(&args.chain, e))?;
    let k = run.read_intrinsics(&args.intrinsics)?;
    let shell: CameraShellConfig = match &args.shell_config {
        Some(p) => run.read_json(p)?,
        None => CameraShellConfig::default(),
    };
    let noise: NoiseConfig = match &args.noise_config {
        Some(p) => run.read_json(p)?,
        None => NoiseConfig::default(),
    };
    let scale = if args.emit_belief_maps {
        let s = MapScale::try_from(args.map_scale).map_err(CliError::argument)?;
        s.map_dims(k.width, k.height)?;
        Some(s)
    } else {
        None
    };
    let opts = GenerateOptions {
        n_frames: args.frames,
        camera_mode: match args.camera_mode {
            CameraModeArg::Static => CameraMode::Static,
            CameraModeArg::PerFrame => CameraMode::PerFrame,
        },
        seed: args.seed,
    };
    let mut dataset: Dataset = generate_dataset(&chain, &k, &shell, &noise, &opts)?;
    dataset.header.chain = ChainRef {
        name: chain.name.clone(),
        path: Some(args.chain.display().to_string()),
        sha256: Some(crate::run::sha256_hex(&chain_bytes)),
    };
    dataset.header.belief_map_scale = scale;

    if let Some(scale) = scale {
        let stacks = dataset
            .frames
            .par_iter()
            .map(|f| render_frame_belief_maps(&chain, f, &k, scale))
            .collect::<Result<Vec<_>, _>>()?;
        for (f, stack) in dataset.frames.iter_mut().zip(stacks) {
            let rel = Path::new(BELIEF_DIR).join(bmap_name(f.index));
            let path = args.out.join(&rel);
            let mut bytes = Vec::new();
            write_bmap(&stack, &mut bytes)?;
            run.write(&path, &bytes)?;
            run.write_json(
                &sidecar_path(&path),
                &BmapSidecar {
                    keypoints: stack.names.clone(),
                    alpha: scale,
                },
            )?;
            f.belief_maps = Some(rel.display().to_string());
        }
    }

    for f in &dataset.frames {
        f.validate(&chain, &k)
            .map_err(|e| CliError::new("InvalidFrame", e, crate::error::EXIT_IO))?;
    }

    if args.emit_handeye {
        let hand_link = args.hand_link.unwrap_or(chain.joints.len());
        let marker: Transform = match &args.marker_offset {
            Some(p) => run.read_json(p)?,
            None => Transform::from_translation(Vec3::from(DEFAULT_MARKER_OFFSET_M)),
        };
        let cam = dataset
            .frames
            .first()
            .and_then(|f| f.gt_cam_from_base)
            .unwrap_or_else(Transform::identity);
        let qs: Vec<_> = dataset.frames.iter().map(|f| f.joint_config.clone()).collect();
        let pose_noise = PoseNoise {
            rotation_deg: args.marker_noise_deg,
            translation_m: args.marker_noise_m,
        };
        let samples = generate_handeye_samples(&chain, hand_link, &marker, &cam, &qs, &pose_noise, args.seed)?;
        run.write_json(&args.out.join(HANDEYE_FILE), &samples)?;
    }

    run.write_json(&args.out.join(DATASET_FILE), &dataset)?;
    run.finish(&args.out.join("manifest.json"))
}

// --- compare ---------------------------------------------------------------

#[derive(Debug, Clone, Args, Serialize)]
pub struct CompareArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Marker observations at the dataset's joint configurations.
    #[arg(long)]
    pub hec_samples: Option<PathBuf>,
    /// Base-frame workspace targets, a JSON array of `[x, y, z]` (default: built-in set).
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_M_RANGE)]
    pub m_range: String,
    #[arg(long)]
    pub big_m: Option<usize>,
    #[arg(long, default_value_t = camrobot::metrics::DEFAULT_N_CAP)]
    pub n_cap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver_args: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub estimates: Vec<(String, Transform)>,
    pub workspace_errors_mm: Vec<MethodErrors>,
    pub dream_sweep: SweepResult,
    pub hec_sweep: Option<SweepResult>,
    pub warnings: Vec<String>,
}

pub fn compare(args: &CompareArgs) -> Result<(), CliError> {
    let m_values = parse_m_values(&args.m_range)?;
    let mut run = Run::new("compare", args, Some(args.seed));
    let pnp = args.solver_args.config()?;
    let chain = run.read_chain(&args.chain)?;
    let k = run.read_intrinsics(&args.intrinsics)?;
    let frames = read_frames(&mut run, &args.dataset)?;
    let big_m = args.big_m.unwrap_or(default_big_m(frames.len()));
    let mut warnings = Vec::new();

    let cfg = SweepConfig {
        big_m,
        m_values: m_values.clone(),
        n_cap: args.n_cap,
        seed: args.seed,
    };
    let dream = dream_sweep(&chain, &k, &frames, &cfg, &pnp)?;
    let obs = observations(
        &mut run,
        &chain,
        &k,
        &frames[..big_m.min(frames.len())],
        None,
        &PeakExtractConfig::default(),
    )?;
    let mut estimates = vec![("dream".to_string(), solve_multiframe(&obs, &k, &pnp)?.pose)];

    let hec = match &args.hec_samples {
        Some(p) => {
            let samples: Vec<HandEyeSample> = run.read_list(p, "samples")?;
            let hec_m: Vec<usize> = m_values
                .iter()
                .copied()
                .filter(|&m| m >= SweepSolver::Hec.min_m())
                .collect();
            if hec_m.len() < m_values.len() {
                warnings.push(format!(
                    "hand-eye needs m >= {}; smaller m skipped for hec",
                    SweepSolver::Hec.min_m()
                ));
            }
            let hec_cfg = SweepConfig {
                m_values: hec_m,
                ..cfg.clone()
            };
            let n = big_m.min(samples.len());
            let sol = solve_eye_on_base(&samples[..n], PairMode::AllPairs)?;
            estimates.push(("hec".to_string(), sol.cam_from_base));
            Some(hec_sweep(&chain, &samples, &frames, &hec_cfg)?)
        }
        None => {
            warnings.push("no hand-eye samples given; comparison is keypoint-solver only".into());
            None
        }
    };

    let reference: Vec<Vec3> = match &args.targets {
        Some(p) => run.read_json::<Vec<[f64; 3]>>(p)?.into_iter().map(Vec3::from).collect(),
        None => workspace_targets(),
    };
    let workspace = match frames.first().and_then(|f| f.gt_cam_from_base) {
        Some(gt) => {
            let targets_cam: Vec<Vec3> = reference.iter().map(|p| gt.apply(p)).collect();
            workspace_error_report(&estimates, &targets_cam, &reference)?
        }
        None => {
            warnings.push("dataset has no ground-truth camera pose; workspace errors skipped".into());
            Vec::new()
        }
    };

    let report = CompareReport {
        estimates,
        workspace_errors_mm: workspace,
        dream_sweep: dream,
        hec_sweep: hec,
        warnings,
    };
    run.write_json(&args.out, &report)?;
    run.finish(&manifest_path_for(&args.out))
}
