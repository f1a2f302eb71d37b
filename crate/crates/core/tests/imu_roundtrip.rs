//! Simulate then integrate: IMU proxies against the analytic trajectories
//! they were generated from.

use attnvo::data::{synth_build, SyntheticSceneConfig, TrajectoryKind};
use attnvo::geometry::{relative_pose, Pose, Vec3};
use attnvo::imu::*;

/// Exact state of the analytic path: central difference with a tiny step.
fn exact_state(cfg: &SyntheticSceneConfig, t: f64) -> ImuState {
    let h = 1e-5;
    let v = (cfg.pose_at(t + h).translation - cfg.pose_at(t - h).translation) / (2.0 * h);
    ImuState::moving(cfg.pose_at(t), v)
}

/// Worst translation and rotation error over every proxy of every window.
fn proxy_errors(cfg: &SyntheticSceneConfig, window: usize) -> (f64, f64, usize) {
    let scene = synth_build(cfg).unwrap();
    let stamps: Vec<f64> = scene.groundtruth.iter().map(|g| g.timestamp).collect();
    let proxies = window_proxies(&scene.imu, &stamps, window, |t| exact_state(cfg, t)).unwrap();
    let firsts = partition_windows(stamps.len(), window).unwrap();
    let (mut et, mut er) = (0.0f64, 0.0f64);
    for ((_, poses), first) in proxies.iter().zip(&firsts) {
        for (j, p) in poses.iter().enumerate() {
            let truth = relative_pose(&scene.groundtruth[*first].pose, &scene.groundtruth[first + j + 1].pose);
            et = et.max((p.translation - truth.translation).norm());
            er = er.max(p.rotation.angle_to(&truth.rotation));
        }
    }
    (et, er, proxies.len())
}

fn scene(trajectory: TrajectoryKind, frame_rate: f64, imu_rate: f64) -> SyntheticSceneConfig {
    SyntheticSceneConfig {
        trajectory,
        frame_rate,
        imu_rate,
        frame_count: 41,
        ..SyntheticSceneConfig::default()
    }
}

#[test]
fn circle_one_second_windows_at_200_hz() {
    let cfg = scene(TrajectoryKind::Circle { radius: 8.0, speed: 2.0 }, 4.0, 200.0);
    let (et, er, n) = proxy_errors(&cfg, 4);
    assert_eq!(n, 10);
    assert!(et < 1e-3, "translation error {et}");
    assert!(er < 1e-4, "rotation error {er}");
}

#[test]
fn figure_eight_one_second_windows_at_200_hz() {
    let cfg = scene(TrajectoryKind::FigureEight { radius: 8.0, speed: 2.0 }, 4.0, 200.0);
    let (et, er, _) = proxy_errors(&cfg, 4);
    assert!(et < 1e-3, "translation error {et}");
    assert!(er < 1e-4, "rotation error {er}");
}

#[test]
fn circle_endpoint_at_100_hz() {
    // radius 5 m at 0.5 rad/s
    let cfg = SyntheticSceneConfig {
        extent: 2.0,
        ..scene(TrajectoryKind::Circle { radius: 5.0, speed: 2.5 }, 10.0, 100.0)
    };
    let (et, _, _) = proxy_errors(&cfg, 4);
    assert!(et < 0.01, "endpoint error {et}");
}

#[test]
fn accelerometer_bias_drift_is_half_b_t_squared() {
    let b = 0.05;
    let params = ImuNoiseParams {
        accel_bias: Vec3::new(b, 0.0, 0.0),
        ..ImuNoiseParams::default()
    };
    let traj: Vec<TimedPose> = (0..=400)
        .map(|k| TimedPose {
            timestamp: k as f64 * 0.005,
            pose: Pose::identity(),
        })
        .collect();
    let imu = simulate_measurements(&traj, &params).unwrap();
    for t_end in [1.0, 2.0] {
        let frames: Vec<f64> = (0..=4).map(|k| k as f64 * t_end / 4.0).collect();
        let window = ImuWindow {
            samples: imu.iter().copied().filter(|s| s.timestamp < t_end - 1e-9).collect(),
            start_state: ImuState::default(),
            frame_timestamps: frames.clone(),
        };
        let poses = integrate_window(&window).unwrap();
        for (p, t) in poses.iter().zip(&frames[1..]) {
            let oracle = 0.5 * b * t * t;
            assert!((p.translation.x - oracle).abs() <= 0.1 * oracle, "t={t}: {} vs {oracle}", p.translation.x);
        }
    }
}

#[test]
fn proxies_ignore_samples_before_their_window() {
    let cfg = scene(TrajectoryKind::FigureEight { radius: 8.0, speed: 2.0 }, 10.0, 200.0);
    let scene = synth_build(&cfg).unwrap();
    let stamps: Vec<f64> = scene.groundtruth.iter().map(|g| g.timestamp).collect();
    let start = |t| exact_state(&cfg, t);
    let clean = window_proxies(&scene.imu, &stamps, 4, start).unwrap();
    let mut perturbed = scene.imu.clone();
    // corrupt everything before the second window's first frame
    for s in perturbed.iter_mut().filter(|s| s.timestamp < stamps[4] - 1e-9) {
        s.accel += Vec3::new(3.0, -2.0, 1.0);
        s.gyro += Vec3::new(0.5, 0.1, -0.2);
    }
    let dirty = window_proxies(&perturbed, &stamps, 4, start).unwrap();
    assert_ne!(clean[0], dirty[0]);
    assert_eq!(clean[1..], dirty[1..]);
}

#[test]
fn noisy_stream_is_seed_deterministic() {
    let traj: Vec<TimedPose> = (0..200)
        .map(|k| {
            let t = k as f64 * 0.005;
            TimedPose {
                timestamp: t,
                pose: Pose::new(
                    attnvo::geometry::Quaternion::exp(&Vec3::new(0.0, 0.0, 0.3 * t)),
                    Vec3::new(t, 0.5 * t * t, 0.0),
                )
                .unwrap(),
            }
        })
        .collect();
    let params = |seed| ImuNoiseParams {
        accel_noise_std: 0.1,
        gyro_noise_std: 0.01,
        accel_bias_walk_std: 0.001,
        rng_seed: seed,
        ..ImuNoiseParams::default()
    };
    let a = simulate_measurements(&traj, &params(7)).unwrap();
    let b = simulate_measurements(&traj, &params(7)).unwrap();
    let c = simulate_measurements(&traj, &params(8)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn quaternion_norm_survives_long_integration() {
    let mut s = ImuState::default();
    let sample = ImuSample {
        timestamp: 0.0,
        accel: Vec3::new(0.3, -0.1, STANDARD_GRAVITY),
        gyro: Vec3::new(0.7, -1.3, 2.1),
    };
    for _ in 0..100_000 {
        s = integrate_step(&s, &sample, 1e-3).unwrap();
    }
    assert!((s.orientation.norm() - 1.0).abs() < 1e-9);
}
