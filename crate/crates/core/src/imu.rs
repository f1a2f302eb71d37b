//! Strapdown IMU model: measurement simulation, integration, and the
//! per-window relative-pose proxies used as training targets.
//!
//! Sign convention: gravity is a world-frame vector `g` (default
//! `(0, 0, -9.81)`). An accelerometer measures specific force
//! `a_m = C(q)^T (a - g) + b_a + noise`, and the kinematics invert it with
//! `v_dot = C(q) (a_m - b_a) + g`, so simulating and then integrating is
//! an exact round trip up to discretization error.
//!
//! Each sample `k` holds the rates valid on `[t_k, t_{k+1})`. One step uses
//! the exact quaternion exponential for attitude, rotates the specific force
//! with the mid-interval attitude, and integrates position with the average
//! of the start and end velocities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quat_to_rotmat, relative_pose, Pose, Quaternion, Vec3};

pub const STANDARD_GRAVITY: f64 = 9.81;

pub fn standard_gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, -STANDARD_GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub timestamp: f64,
    /// Specific force in the sensor frame, m/s^2.
    pub accel: Vec3,
    /// Angular rate in the sensor frame, rad/s.
    pub gyro: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuNoiseParams {
    #[serde(with = "crate::geometry::vec3_serde")]
    pub accel_bias: Vec3,
    #[serde(with = "crate::geometry::vec3_serde")]
    pub gyro_bias: Vec3,
    pub accel_noise_std: f64,
    pub gyro_noise_std: f64,
    #[serde(with = "crate::geometry::vec3_serde")]
    pub gravity: Vec3,
    pub rng_seed: u64,
    /// Bias random-walk densities; zero disables the walk.
    #[serde(default)]
    pub accel_bias_walk_std: f64,
    #[serde(default)]
    pub gyro_bias_walk_std: f64,
}

impl Default for ImuNoiseParams {
    fn default() -> Self {
        ImuNoiseParams {
            accel_bias: Vec3::zeros(),
            gyro_bias: Vec3::zeros(),
            accel_noise_std: 0.0,
            gyro_noise_std: 0.0,
            gravity: standard_gravity(),
            rng_seed: 0,
            accel_bias_walk_std: 0.0,
            gyro_bias_walk_std: 0.0,
        }
    }
}

impl ImuNoiseParams {
    pub fn validate(&self) -> Result<()> {
        let stds = [
            self.accel_noise_std,
            self.gyro_noise_std,
            self.accel_bias_walk_std,
            self.gyro_bias_walk_std,
        ];
        if stds.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("noise standard deviations must be >= 0"));
        }
        let g = self.gravity.norm();
        // zero gravity is allowed for tests
        if g != 0.0 && !(9.7..=9.9).contains(&g) {
            return Err(Error::invalid(format!(
                "gravity magnitude {g} outside [9.7, 9.9]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub orientation: Quaternion,
    pub accel_bias: Vec3,
    pub gyro_bias: Vec3,
}

impl Default for ImuState {
    fn default() -> Self {
        ImuState::at_rest(Pose::identity())
    }
}

impl ImuState {
    pub fn at_rest(pose: Pose) -> Self {
        ImuState::moving(pose, Vec3::zeros())
    }

    pub fn moving(pose: Pose, velocity: Vec3) -> Self {
        ImuState {
            position: pose.translation,
            velocity,
            orientation: pose.rotation,
            accel_bias: Vec3::zeros(),
            gyro_bias: Vec3::zeros(),
        }
    }

    pub fn pose(&self) -> Pose {
        Pose {
            rotation: self.orientation,
            translation: self.position,
        }
    }
}

/// A burst of IMU samples spanning `window_size` frame intervals.
#[derive(Debug, Clone)]
pub struct ImuWindow {
    pub samples: Vec<ImuSample>,
    pub start_state: ImuState,
    /// `window_size + 1` frame timestamps; the first is the window origin.
    pub frame_timestamps: Vec<f64>,
}

impl ImuWindow {
    pub fn window_size(&self) -> usize {
        self.frame_timestamps.len().saturating_sub(1)
    }
}

/// A pose sampled at a timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub timestamp: f64,
    pub pose: Pose,
}

/// Strapdown integrator parameterized by the world gravity vector.
#[derive(Debug, Clone, Copy)]
pub struct Strapdown {
    pub gravity: Vec3,
}

impl Default for Strapdown {
    fn default() -> Self {
        Strapdown {
            gravity: standard_gravity(),
        }
    }
}

impl Strapdown {
    pub fn new(gravity: Vec3) -> Self {
        Strapdown { gravity }
    }

    pub fn step(&self, state: &ImuState, sample: &ImuSample, dt: f64) -> Result<ImuState> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        let omega = sample.gyro - state.gyro_bias;
        let q = state.orientation;
        let q_mid = q * Quaternion::exp(&(omega * (0.5 * dt)));
        let accel_world = quat_to_rotmat(&q_mid) * (sample.accel - state.accel_bias) + self.gravity;
        let velocity = state.velocity + accel_world * dt;
        let position = state.position + (state.velocity + velocity) * (0.5 * dt);
        Ok(ImuState {
            position,
            velocity,
            orientation: q * Quaternion::exp(&(omega * dt)),
            accel_bias: state.accel_bias,
            gyro_bias: state.gyro_bias,
        })
    }

    /// Integrates from the window origin and returns the pose at each later
    /// frame boundary, relative to the origin.
    pub fn integrate_window(&self, window: &ImuWindow) -> Result<Vec<Pose>> {
        let samples = &window.samples;
        if samples.is_empty() {
            return Err(Error::invalid("IMU window has no samples"));
        }
        let frames = &window.frame_timestamps;
        if frames.len() < 2 {
            return Err(Error::invalid("IMU window needs at least two frame timestamps"));
        }
        if frames.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("frame timestamps must be strictly increasing"));
        }
        if samples.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::invalid("IMU timestamps must be strictly increasing"));
        }
        let t0 = frames[0];
        if samples[0].timestamp > t0 + 1e-9 {
            return Err(Error::invalid(format!(
                "IMU samples start at {} after window origin {t0}",
                samples[0].timestamp
            )));
        }

        let origin = window.start_state.pose();
        let mut state = window.start_state;
        let mut poses = Vec::with_capacity(frames.len() - 1);
        let mut time = t0;
        // index of the sample active at `time`
        let mut k = samples.partition_point(|s| s.timestamp <= time + 1e-12).max(1) - 1;
        for &boundary in &frames[1..] {
            while time < boundary - 1e-12 {
                let next_sample = samples.get(k + 1).map(|s| s.timestamp);
                let end = match next_sample {
                    Some(ts) if ts < boundary => ts,
                    _ => boundary,
                };
                state = self.step(&state, &samples[k], end - time)?;
                time = end;
                if next_sample.is_some_and(|ts| ts <= time + 1e-12) {
                    k += 1;
                }
            }
            time = boundary;
            poses.push(relative_pose(&origin, &state.pose()));
        }
        Ok(poses)
    }

    /// Splits the frame sequence into consecutive windows of `window_size`
    /// intervals and integrates each from a fresh start state, so a window's
    /// proxies depend only on its own samples.
    pub fn window_proxies<F>(
        &self,
        imu: &[ImuSample],
        frame_timestamps: &[f64],
        window_size: usize,
        start_state: F,
    ) -> Result<Vec<(usize, Vec<Pose>)>>
    where
        F: Fn(f64) -> ImuState,
    {
        let windows = partition_windows(frame_timestamps.len(), window_size)?;
        windows
            .into_iter()
            .enumerate()
            .map(|(index, first)| {
                let frames = frame_timestamps[first..=first + window_size].to_vec();
                let window = ImuWindow {
                    samples: window_samples(imu, frames[0], frames[window_size]),
                    start_state: start_state(frames[0]),
                    frame_timestamps: frames,
                };
                Ok((index, self.integrate_window(&window)?))
            })
            .collect()
    }
}

/// First frame index of every complete window.
pub fn partition_windows(frame_count: usize, window_size: usize) -> Result<Vec<usize>> {
    if window_size < 2 {
        return Err(Error::invalid(format!(
            "window size must be >= 2, got {window_size}"
        )));
    }
    if frame_count == 0 || window_size > frame_count - 1 {
        return Err(Error::invalid(format!(
            "window size {window_size} exceeds the {frame_count}-frame sequence"
        )));
    }
    Ok((0..)
        .map(|k| k * window_size)
        .take_while(|first| first + window_size < frame_count)
        .collect())
}

/// Samples active during `[start, end)`, including the one in effect at `start`.
fn window_samples(imu: &[ImuSample], start: f64, end: f64) -> Vec<ImuSample> {
    let first = imu.partition_point(|s| s.timestamp <= start + 1e-12).max(1) - 1;
    let last = imu.partition_point(|s| s.timestamp < end - 1e-12);
    imu[first..last.max(first + 1).min(imu.len())].to_vec()
}

pub fn integrate_step(state: &ImuState, sample: &ImuSample, dt: f64) -> Result<ImuState> {
    Strapdown::default().step(state, sample, dt)
}

pub fn integrate_window(window: &ImuWindow) -> Result<Vec<Pose>> {
    Strapdown::default().integrate_window(window)
}

pub fn window_proxies<F: Fn(f64) -> ImuState>(
    imu: &[ImuSample],
    frame_timestamps: &[f64],
    window_size: usize,
    start_state: F,
) -> Result<Vec<(usize, Vec<Pose>)>> {
    Strapdown::default().window_proxies(imu, frame_timestamps, window_size, start_state)
}

/// Synthesizes accelerometer and gyroscope samples from a uniformly sampled
/// trajectory. Sample `k` carries the mean rates over `[t_k, t_{k+1})`;
/// the final sample repeats the previous interval's rates.
pub fn simulate_measurements(
    trajectory: &[TimedPose],
    params: &ImuNoiseParams,
) -> Result<Vec<ImuSample>> {
    let n = trajectory.len();
    if n < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 trajectory samples, got {n}"
        )));
    }
    params.validate()?;
    let dt = trajectory[1].timestamp - trajectory[0].timestamp;
    if !(dt > 0.0) {
        return Err(Error::invalid("trajectory timestamps must increase"));
    }
    for w in trajectory.windows(2) {
        let step = w[1].timestamp - w[0].timestamp;
        if (step - dt).abs() > 1e-6 * dt {
            return Err(Error::invalid("trajectory must be uniformly sampled"));
        }
    }

    let p: Vec<Vec3> = trajectory.iter().map(|s| s.pose.translation).collect();
    let mut v = Vec::with_capacity(n);
    v.push((p[1] * 4.0 - p[0] * 3.0 - p[2]) / (2.0 * dt));
    for k in 1..n - 1 {
        v.push((p[k + 1] - p[k - 1]) / (2.0 * dt));
    }
    v.push((p[n - 1] * 3.0 - p[n - 2] * 4.0 + p[n - 3]) / (2.0 * dt));

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let normal = |std: f64| Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()));
    let accel_noise = normal(params.accel_noise_std)?;
    let gyro_noise = normal(params.gyro_noise_std)?;
    let accel_walk = normal(params.accel_bias_walk_std * dt.sqrt())?;
    let gyro_walk = normal(params.gyro_bias_walk_std * dt.sqrt())?;
    let draw = |dist: &Normal<f64>, rng: &mut ChaCha8Rng| {
        Vec3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng))
    };

    let mut accel_bias = params.accel_bias;
    let mut gyro_bias = params.gyro_bias;
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let i = k.min(n - 2);
        let q = trajectory[i].pose.rotation;
        let q_next = trajectory[i + 1].pose.rotation;
        let omega = (q.inverse() * q_next).log() / dt;
        let accel_world = (v[i + 1] - v[i]) / dt;
        let q_mid = q * Quaternion::exp(&(omega * (0.5 * dt)));
        let specific_force = quat_to_rotmat(&q_mid).transpose() * (accel_world - params.gravity);

        let eta_a = draw(&accel_noise, &mut rng);
        let eta_w = draw(&gyro_noise, &mut rng);
        out.push(ImuSample {
            timestamp: trajectory[k].timestamp,
            accel: specific_force + accel_bias + eta_a,
            gyro: omega + gyro_bias + eta_w,
        });
        accel_bias += draw(&accel_walk, &mut rng);
        gyro_bias += draw(&gyro_walk, &mut rng);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rest_sample(t: f64) -> ImuSample {
        ImuSample {
            timestamp: t,
            accel: Vec3::new(0.0, 0.0, STANDARD_GRAVITY),
            gyro: Vec3::zeros(),
        }
    }

    #[test]
    fn stationary_integration_stays_put() {
        let mut s = ImuState::default();
        for k in 0..1000 {
            s = integrate_step(&s, &rest_sample(k as f64 * 1e-3), 1e-3).unwrap();
        }
        assert!(s.position.norm() < 1e-9);
        assert!(s.velocity.norm() < 1e-9);
    }

    #[test]
    fn constant_yaw_rate_integrates_to_half_turn() {
        // closed form: q(t) = exp(0.5 * Omega * t) q0 = cos(|w|t/2) I + sin(|w|t/2)/|w| Omega
        let w = Vec3::new(0.0, 0.0, PI);
        let half = 0.5 * w.norm() * 1.0;
        let oracle = omega_closed_form(&w, half);
        let mut s = ImuState::at_rest(Pose::identity());
        let dt = 1e-3;
        for k in 0..1000 {
            let sample = ImuSample {
                timestamp: k as f64 * dt,
                accel: s.orientation.inverse().rotate(&Vec3::new(0.0, 0.0, STANDARD_GRAVITY)),
                gyro: w,
            };
            s = integrate_step(&s, &sample, dt).unwrap();
        }
        assert!(s.orientation.angle_to(&oracle) < 1e-6);
        let expected = Quaternion::new(0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(s.orientation.angle_to(&expected) < 1e-6);
        assert!((s.orientation.norm() - 1.0).abs() < 1e-9);
    }

    fn omega_closed_form(w: &Vec3, half_angle: f64) -> Quaternion {
        let m = nalgebra::Matrix4::identity() * half_angle.cos()
            + crate::geometry::omega_matrix(w) * (half_angle.sin() / w.norm());
        let q0 = nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0);
        let q = m * q0;
        Quaternion::new(q[0], q[1], q[2], q[3]).unwrap()
    }

    #[test]
    fn constant_acceleration_matches_half_a_t_squared() {
        let mut s = ImuState::default();
        let dt = 1e-3;
        let sample = |t| ImuSample {
            timestamp: t,
            accel: Vec3::new(1.0, 0.0, STANDARD_GRAVITY),
            gyro: Vec3::zeros(),
        };
        for k in 0..2000 {
            s = integrate_step(&s, &sample(k as f64 * dt), dt).unwrap();
        }
        assert!((s.position - Vec3::new(2.0, 0.0, 0.0)).norm() < 1e-3);
    }

    #[test]
    fn non_positive_dt_rejected() {
        let s = ImuState::default();
        assert!(matches!(
            integrate_step(&s, &rest_sample(0.0), 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(integrate_step(&s, &rest_sample(0.0), -1.0).is_err());
    }

    #[test]
    fn empty_window_rejected() {
        let w = ImuWindow {
            samples: vec![],
            start_state: ImuState::default(),
            frame_timestamps: vec![0.0, 0.1],
        };
        assert!(matches!(integrate_window(&w), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn zero_motion_window_is_identity() {
        let samples: Vec<_> = (0..=40).map(|k| rest_sample(k as f64 * 0.01)).collect();
        let w = ImuWindow {
            samples,
            start_state: ImuState::default(),
            frame_timestamps: vec![0.0, 0.1, 0.2, 0.3, 0.4],
        };
        let poses = integrate_window(&w).unwrap();
        assert_eq!(poses.len(), 4);
        for p in poses {
            assert!(p.translation.norm() < 1e-9);
            assert!(p.rotation.angle_to(&Quaternion::IDENTITY) < 1e-9);
        }
    }

    #[test]
    fn accelerometer_bias_drift_matches_analytic() {
        let params = ImuNoiseParams {
            accel_bias: Vec3::new(0.05, 0.0, 0.0),
            ..Default::default()
        };
        let traj: Vec<_> = (0..=200)
            .map(|k| TimedPose {
                timestamp: k as f64 * 0.005,
                pose: Pose::identity(),
            })
            .collect();
        let imu = simulate_measurements(&traj, &params).unwrap();
        let w = ImuWindow {
            samples: imu,
            start_state: ImuState::default(),
            frame_timestamps: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        };
        let end = integrate_window(&w).unwrap()[3].translation;
        let expected = 0.5 * 0.05 * 1.0;
        assert!((end.x - expected).abs() < 0.1 * expected, "{end}");
    }

    #[test]
    fn resting_imu_measures_plus_g() {
        let traj: Vec<_> = (0..10)
            .map(|k| TimedPose {
                timestamp: k as f64 * 0.01,
                pose: Pose::identity(),
            })
            .collect();
        let imu = simulate_measurements(&traj, &ImuNoiseParams::default()).unwrap();
        for s in &imu {
            assert!((s.accel - Vec3::new(0.0, 0.0, 9.81)).norm() < 1e-12);
            assert!(s.gyro.norm() < 1e-12);
        }
        assert!(simulate_measurements(&traj[..2], &ImuNoiseParams::default()).is_err());
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let traj: Vec<_> = (0..50)
            .map(|k| TimedPose {
                timestamp: k as f64 * 0.005,
                pose: Pose::identity(),
            })
            .collect();
        let params = ImuNoiseParams {
            accel_noise_std: 0.1,
            gyro_noise_std: 0.01,
            rng_seed: 77,
            ..Default::default()
        };
        let a = simulate_measurements(&traj, &params).unwrap();
        let b = simulate_measurements(&traj, &params).unwrap();
        assert_eq!(a, b);
        let other = simulate_measurements(&traj, &ImuNoiseParams { rng_seed: 78, ..params }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn partition_arithmetic() {
        assert_eq!(partition_windows(9, 4).unwrap(), vec![0, 4]);
        assert_eq!(partition_windows(10, 4).unwrap(), vec![0, 4]);
        assert!(partition_windows(4, 4).is_err());
        assert!(partition_windows(9, 1).is_err());
    }

    #[test]
    fn window_proxies_shape_and_drift_reset() {
        let frames: Vec<f64> = (0..9).map(|k| k as f64 * 0.1).collect();
        let mut imu: Vec<_> = (0..=90).map(|k| rest_sample(k as f64 * 0.01)).collect();
        let proxies = window_proxies(&imu, &frames, 4, |_| ImuState::default()).unwrap();
        assert_eq!(proxies.len(), 2);
        assert!(proxies.iter().all(|(_, p)| p.len() == 4));
        for (_, poses) in &proxies {
            for p in poses {
                assert!(p.translation.norm() < 1e-9);
            }
        }
        // corrupt everything before window 1
        for s in imu.iter_mut().take_while(|s| s.timestamp < 0.4 - 1e-9) {
            s.accel += Vec3::new(3.0, -1.0, 2.0);
            s.gyro += Vec3::new(0.3, 0.2, -0.1);
        }
        let perturbed = window_proxies(&imu, &frames, 4, |_| ImuState::default()).unwrap();
        assert_eq!(proxies[1], perturbed[1]);
        assert_ne!(proxies[0], perturbed[0]);
    }

    #[test]
    fn gravity_validation() {
        let mut p = ImuNoiseParams::default();
        assert!(p.validate().is_ok());
        p.gravity = Vec3::zeros();
        assert!(p.validate().is_ok());
        p.gravity = Vec3::new(0.0, 0.0, -5.0);
        assert!(p.validate().is_err());
    }
}
