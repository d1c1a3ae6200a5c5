use camrobot::beliefmap::{extract_all, MapScale, PeakExtractConfig};
use camrobot::handeye::{solve_eye_on_base, PairMode};
use camrobot::kinematics::{load_chain, KinematicChain};
use camrobot::metrics::{add_mm, dream_sweep, SweepConfig};
use camrobot::pnp::{solve_frame, solve_multiframe, FrameObservation, PnpConfig};
use camrobot::synth::{
    generate_dataset, generate_handeye_samples, render_frame_belief_maps, CameraMode, Dataset, GenerateOptions,
    NoiseConfig, PoseNoise,
};
use camrobot::{CameraIntrinsics, Transform, Vec3};

fn panda() -> KinematicChain {
    load_chain(include_str!("../fixtures/panda.json")).unwrap()
}

fn wide() -> CameraIntrinsics {
    serde_json::from_str(include_str!("../fixtures/wide640.json")).unwrap()
}

fn dataset(n: usize, noise: NoiseConfig, seed: u64) -> Dataset {
    let opts = GenerateOptions {
        n_frames: n,
        camera_mode: CameraMode::Static,
        seed,
    };
    generate_dataset(&panda(), &wide(), &Default::default(), &noise, &opts).unwrap()
}

fn observations(ds: &Dataset) -> Vec<FrameObservation> {
    ds.frames
        .iter()
        .map(|f| FrameObservation {
            detections: f.keypoint_detections(),
            keypoints3d: f.keypoints(),
        })
        .collect()
}

fn mean_add(ds: &Dataset, est: &Transform) -> f64 {
    let adds: Vec<f64> = ds
        .frames
        .iter()
        .map(|f| {
            let pts: Vec<Vec3> = f.keypoints().iter().map(|p| p.position).collect();
            add_mm(est, &f.gt_cam_from_base.unwrap(), &pts).unwrap()
        })
        .collect();
    adds.iter().sum::<f64>() / adds.len() as f64
}

#[test]
fn noiseless_static_dataset_recovers_camera() {
    let ds = dataset(100, NoiseConfig::default(), 5);
    let gt = ds.frames[0].gt_cam_from_base.unwrap();
    let sol = solve_multiframe(&observations(&ds), &wide(), &PnpConfig::default()).unwrap();
    assert!(sol.pose.translation_error(&gt) < 1e-5);
    assert!(sol.pose.rotation_error(&gt) < 1e-5);
    assert_eq!(sol.frames_used, 100);
}

#[test]
fn per_frame_cameras_are_each_recovered() {
    let opts = GenerateOptions {
        n_frames: 30,
        camera_mode: CameraMode::PerFrame,
        seed: 8,
    };
    let ds = generate_dataset(&panda(), &wide(), &Default::default(), &Default::default(), &opts).unwrap();
    for f in ds.frames.iter().filter(|f| f.detections.len() >= 6) {
        let sol = solve_frame(&f.keypoint_detections(), &f.keypoints(), &wide(), &PnpConfig::default()).unwrap();
        assert!(sol.pose.translation_error(&f.gt_cam_from_base.unwrap()) < 1e-5);
    }
}

#[test]
fn belief_maps_round_trip_through_the_solver() {
    let ds = dataset(12, NoiseConfig::default(), 9);
    let direct = solve_multiframe(&observations(&ds), &wide(), &PnpConfig::default()).unwrap();
    for scale in [MapScale::Full, MapScale::Half] {
        let obs: Vec<FrameObservation> = ds
            .frames
            .iter()
            .map(|f| {
                let stack = render_frame_belief_maps(&panda(), f, &wide(), scale).unwrap();
                FrameObservation {
                    detections: extract_all(&stack, &PeakExtractConfig::default())
                        .into_iter()
                        .filter_map(|(_, d)| d)
                        .collect(),
                    keypoints3d: f.keypoints(),
                }
            })
            .collect();
        let sol = solve_multiframe(&obs, &wide(), &PnpConfig::default()).unwrap();
        let vs_direct = mean_add(&ds, &sol.pose) - mean_add(&ds, &direct.pose);
        assert!(vs_direct.abs() < 0.2, "{scale:?}: {vs_direct}");
        if scale == MapScale::Full {
            assert!(mean_add(&ds, &sol.pose) < 0.1);
        }
    }
}

#[test]
fn more_frames_give_lower_median_error() {
    let noise = NoiseConfig {
        pixel_sigma: 2.0,
        ..Default::default()
    };
    let ds = dataset(18, noise, 21);
    let cfg = SweepConfig {
        big_m: 18,
        m_values: vec![1, 3, 9],
        n_cap: 300,
        seed: 4,
    };
    let r = dream_sweep(&panda(), &wide(), &ds.frames, &cfg, &PnpConfig::default()).unwrap();
    let medians: Vec<f64> = r.rows.iter().map(|row| row.median.unwrap()).collect();
    assert!(medians.windows(2).all(|w| w[1] < w[0]), "{medians:?}");
}

#[test]
fn simulated_marker_observations_recover_the_setup() {
    let ds = dataset(6, NoiseConfig::default(), 2);
    let cam = ds.frames[0].gt_cam_from_base.unwrap();
    let marker = Transform::from_xyz_rpy([0.01, -0.02, 0.06], [0.1, 0.2, -0.3]);
    let qs: Vec<_> = ds.frames.iter().map(|f| f.joint_config.clone()).collect();
    let samples = generate_handeye_samples(&panda(), 9, &marker, &cam, &qs, &PoseNoise::default(), 0).unwrap();
    let sol = solve_eye_on_base(&samples, PairMode::Consecutive).unwrap();
    assert!(sol.cam_from_base.translation_error(&cam) < 1e-8);
    assert!(sol.cam_from_base.rotation_error(&cam) < 1e-8);
    assert!(sol.hand_from_marker.translation_error(&marker) < 1e-8);
}
