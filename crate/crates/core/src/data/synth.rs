//! Synthetic scenes: random world points seen along an analytic camera
//! path, rendered as bright squares over a faint static checkerboard.

use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_imu_csv, write_tum_poses, DatasetManifest, FrameEntry, GroundTruthFormat, GroundTruthPose};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Mat3, Pose, RotationMatrix, Vec3};
use crate::imu::{simulate_measurements, ImuNoiseParams, ImuSample, TimedPose};
use crate::vision::{Descriptor, ExternalFeatures, Image, Keypoint, DESCRIPTOR_BITS};

pub const MIN_VISIBLE_POINTS: f64 = 50.0;
const SQUARE_HALF: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Orbit of `radius` around the point cloud, looking at its centre.
    Circle { radius: f64, speed: f64 },
    /// Lemniscate beside the cloud, looking at its centre.
    FigureEight { radius: f64, speed: f64 },
    /// Sideways pass along x at constant orientation.
    Straight { speed: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneConfig {
    pub point_count: usize,
    /// Half-size of the cube holding the points, meters.
    pub extent: f64,
    pub trajectory: TrajectoryKind,
    pub frame_count: usize,
    pub frame_rate: f64,
    pub imu_rate: f64,
    pub width: usize,
    pub height: usize,
    /// Defaults to a focal length of 0.9 x width centred on the image.
    pub intrinsics: Option<CameraIntrinsics>,
    pub imu_noise: ImuNoiseParams,
    pub rng_seed: u64,
    pub checker_cell: usize,
    pub checker_intensity: u8,
    /// Also write exact point projections as external feature files.
    pub export_exact_features: bool,
}

impl Default for SyntheticSceneConfig {
    fn default() -> Self {
        SyntheticSceneConfig {
            point_count: 300,
            extent: 3.0,
            trajectory: TrajectoryKind::Circle { radius: 8.0, speed: 2.0 },
            frame_count: 100,
            frame_rate: 10.0,
            imu_rate: 200.0,
            width: 64,
            height: 64,
            intrinsics: None,
            imu_noise: ImuNoiseParams::default(),
            rng_seed: 0,
            checker_cell: 8,
            checker_intensity: 40,
            export_exact_features: false,
        }
    }
}

impl SyntheticSceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.point_count < 50 {
            return Err(Error::invalid(format!("point_count must be >= 50, got {}", self.point_count)));
        }
        if !(self.frame_rate > 0.0) || self.imu_rate < 10.0 * self.frame_rate {
            return Err(Error::invalid(format!(
                "imu rate {} must be at least 10x the frame rate {}",
                self.imu_rate, self.frame_rate
            )));
        }
        if self.frame_count < 2 {
            return Err(Error::invalid("need at least 2 frames"));
        }
        if !(self.extent > 0.0) || self.checker_cell == 0 {
            return Err(Error::invalid("extent and checker cell must be positive"));
        }
        let (speed, radius) = match self.trajectory {
            TrajectoryKind::Circle { radius, speed } | TrajectoryKind::FigureEight { radius, speed } => (speed, radius),
            TrajectoryKind::Straight { speed } => (speed, 1.0),
        };
        if !(speed > 0.0 && radius > 0.0) {
            return Err(Error::invalid("trajectory speed and radius must be positive"));
        }
        if let TrajectoryKind::Circle { radius, .. } = self.trajectory {
            if radius <= self.extent * 3f64.sqrt() {
                return Err(Error::invalid(format!(
                    "circle radius {radius} passes through the point cloud of half-size {}",
                    self.extent
                )));
            }
        }
        self.imu_noise.validate()?;
        self.camera().validate()
    }

    pub fn camera(&self) -> CameraIntrinsics {
        self.intrinsics.unwrap_or(CameraIntrinsics {
            fx: 0.9 * self.width as f64,
            fy: 0.9 * self.width as f64,
            cx: self.width as f64 / 2.0,
            cy: self.height as f64 / 2.0,
            width: self.width,
            height: self.height,
        })
    }

    fn duration(&self) -> f64 {
        (self.frame_count - 1) as f64 / self.frame_rate
    }

    /// Camera pose (world-from-camera) at time `t`.
    pub fn pose_at(&self, t: f64) -> Pose {
        let e = self.extent;
        let (position, target) = match self.trajectory {
            TrajectoryKind::Circle { radius, speed } => {
                let th = speed * t / radius;
                (Vec3::new(radius * th.cos(), radius * th.sin(), 0.0), Vec3::zeros())
            }
            TrajectoryKind::FigureEight { radius, speed } => {
                let th = speed * t / radius;
                let p = Vec3::new(radius * th.sin(), -2.0 * e - radius + 0.5 * radius * (2.0 * th).sin(), 0.0);
                (p, Vec3::zeros())
            }
            TrajectoryKind::Straight { speed } => {
                let p = Vec3::new(-0.5 * speed * self.duration() + speed * t, -3.0 * e, 0.0);
                (p, p + Vec3::new(0.0, 1.0, 0.0))
            }
        };
        look_at(&position, &target)
    }

    fn sample_points(&self, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
        let e = self.extent;
        let half_x = match self.trajectory {
            TrajectoryKind::Straight { speed } => e + 0.5 * speed * self.duration(),
            _ => e,
        };
        (0..self.point_count)
            .map(|_| Vec3::new(rng.random_range(-half_x..half_x), rng.random_range(-e..e), rng.random_range(-e..e)))
            .collect()
    }
}

/// Camera looking from `eye` toward `target` with image y pointing down
/// (world z is up).
fn look_at(eye: &Vec3, target: &Vec3) -> Pose {
    let forward = (target - eye).normalize();
    let right = forward.cross(&Vec3::z()).normalize();
    let down = forward.cross(&right);
    let r = Mat3::from_columns(&[right, down, forward]);
    Pose::from_rotation_matrix(&RotationMatrix::project(&r).expect("orthonormal frame"), *eye)
        .expect("finite pose")
}

/// Everything a generated dataset contains, kept in memory.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SyntheticSceneConfig,
    pub intrinsics: CameraIntrinsics,
    pub points: Vec<Vec3>,
    pub groundtruth: Vec<GroundTruthPose>,
    pub imu: Vec<ImuSample>,
    pub images: Vec<Image>,
}

impl SyntheticScene {
    /// Pixel projections of every point inside frame `k`, as `(point index, u, v)`.
    pub fn projections(&self, k: usize) -> Vec<(usize, f64, f64)> {
        let world_to_cam = self.groundtruth[k].pose.inverse();
        self.points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let (u, v) = self.intrinsics.project(&world_to_cam.transform_point(p))?;
                self.intrinsics.contains(u, v).then_some((i, u, v))
            })
            .collect()
    }

    pub fn mean_visible(&self) -> f64 {
        let total: usize = (0..self.groundtruth.len()).map(|k| self.projections(k).len()).sum();
        total as f64 / self.groundtruth.len() as f64
    }
}

fn render(config: &SyntheticSceneConfig, projections: &[(usize, f64, f64)]) -> Result<Image> {
    let (w, h) = (config.width, config.height);
    let mut img = Image::filled(w, h, 0)?;
    for y in 0..h {
        for x in 0..w {
            if (x / config.checker_cell + y / config.checker_cell) % 2 == 1 {
                img.set(x, y, config.checker_intensity);
            }
        }
    }
    for &(_, u, v) in projections {
        let (cx, cy) = (u.round() as i64, v.round() as i64);
        for y in cy - SQUARE_HALF..=cy + SQUARE_HALF {
            for x in cx - SQUARE_HALF..=cx + SQUARE_HALF {
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    img.set(x as usize, y as usize, 255);
                }
            }
        }
    }
    Ok(img)
}

/// Builds the scene in memory. Fails with a sparse-scene error when fewer
/// than 50 points are visible per frame on average.
pub fn synth_build(config: &SyntheticSceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let points = config.sample_points(&mut rng);
    let groundtruth: Vec<GroundTruthPose> = (0..config.frame_count)
        .map(|k| {
            let t = k as f64 / config.frame_rate;
            GroundTruthPose {
                timestamp: t,
                pose: config.pose_at(t),
            }
        })
        .collect();
    // one extra sample past the last frame so every interval is covered
    let imu_count = (config.duration() * config.imu_rate).round() as usize + 2;
    let truth: Vec<TimedPose> = (0..imu_count)
        .map(|k| {
            let t = k as f64 / config.imu_rate;
            TimedPose {
                timestamp: t,
                pose: config.pose_at(t),
            }
        })
        .collect();
    let imu = simulate_measurements(&truth, &config.imu_noise)?;
    let mut scene = SyntheticScene {
        config: config.clone(),
        intrinsics: config.camera(),
        points,
        groundtruth,
        imu,
        images: Vec::new(),
    };
    let mean_visible = scene.mean_visible();
    if mean_visible < MIN_VISIBLE_POINTS {
        return Err(Error::SceneTooSparse { mean_visible });
    }
    scene.images = (0..config.frame_count)
        .map(|k| render(config, &scene.projections(k)))
        .collect::<Result<_>>()?;
    Ok(scene)
}

/// Deterministic descriptor unique to one world point.
fn point_descriptor(seed: u64, index: usize) -> Descriptor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut d = Descriptor::default();
    for i in 0..DESCRIPTOR_BITS {
        d.set_bit(i, rng.next_u32() & 1 == 1);
    }
    d
}

/// Noise-free detector output: every visible point at its exact
/// projection with a per-point descriptor.
pub fn exact_features(scene: &SyntheticScene) -> Vec<ExternalFeatures> {
    (0..scene.groundtruth.len())
        .map(|k| {
            let proj = scene.projections(k);
            ExternalFeatures {
                keypoints: proj.iter().map(|&(_, u, v)| Keypoint::new(u, v, 1.0)).collect(),
                descriptors: proj.iter().map(|&(i, _, _)| point_descriptor(scene.config.rng_seed, i)).collect(),
                descriptor_bits: DESCRIPTOR_BITS,
            }
        })
        .collect()
}

pub fn image_name(k: usize) -> String {
    format!("images/{k:06}.pgm")
}

pub fn feature_name(k: usize) -> String {
    format!("{k:06}.txt")
}

/// Writes `images/*.pgm`, `imu.csv`, `groundtruth.txt` (TUM),
/// `scene.json` and `manifest.json` under `out`.
pub fn synth_generate(config: &SyntheticSceneConfig, out: &Path) -> Result<SyntheticScene> {
    let scene = synth_build(config)?;
    std::fs::create_dir_all(out.join("images"))?;
    let mut frames = Vec::with_capacity(scene.images.len());
    for (k, img) in scene.images.iter().enumerate() {
        let name = image_name(k);
        img.write_pgm(&out.join(&name))?;
        frames.push(FrameEntry {
            t: scene.groundtruth[k].timestamp,
            image: name.into(),
        });
    }
    write_imu_csv(&out.join("imu.csv"), &scene.imu)?;
    write_tum_poses(&out.join("groundtruth.txt"), &scene.groundtruth)?;
    std::fs::write(out.join("scene.json"), serde_json::to_string_pretty(config)?)?;
    if config.export_exact_features {
        let dir = out.join("features");
        std::fs::create_dir_all(&dir)?;
        for (k, f) in exact_features(&scene).iter().enumerate() {
            crate::vision::write_external_features(&dir.join(feature_name(k)), f)?;
        }
    }
    let manifest = DatasetManifest {
        root: out.to_path_buf(),
        frames,
        imu_file: "imu.csv".into(),
        groundtruth_file: "groundtruth.txt".into(),
        groundtruth_format: GroundTruthFormat::Tum,
        intrinsics: scene.intrinsics,
    };
    manifest.write(&out.join(super::MANIFEST_NAME))?;
    Ok(scene)
}
