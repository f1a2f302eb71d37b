//! Dataset manifests, ground-truth and IMU files, and the synthetic scene
//! generator.

pub mod formats;
pub mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use formats::{
    load_imu_csv, load_kitti_poses, load_tum_poses, write_imu_csv, write_kitti_poses, write_tum_poses,
    IMU_CSV_HEADER,
};
pub use synth::{
    exact_features, synth_build, synth_generate, SyntheticScene, SyntheticSceneConfig, TrajectoryKind,
};

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, CameraIntrinsics, Pose, Vec3};
use crate::imu::{ImuSample, ImuState, Strapdown};
use crate::learn::{interval_targets, TrainingWindow};
use crate::vision::Image;

/// Camera pose in the world at a timestamp (world-from-camera).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthPose {
    pub timestamp: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroundTruthFormat {
    Kitti,
    Tum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: f64,
    pub image: PathBuf,
}

/// On-disk layout of a manifest; paths are relative to its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestFile {
    frames: Vec<FrameEntry>,
    imu: PathBuf,
    groundtruth: PathBuf,
    #[serde(default = "default_format")]
    groundtruth_format: GroundTruthFormat,
    intrinsics: CameraIntrinsics,
}

fn default_format() -> GroundTruthFormat {
    GroundTruthFormat::Tum
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub frames: Vec<FrameEntry>,
    pub imu_file: PathBuf,
    pub groundtruth_file: PathBuf,
    pub groundtruth_format: GroundTruthFormat,
    pub intrinsics: CameraIntrinsics,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl DatasetManifest {
    pub fn image_path(&self, index: usize) -> PathBuf {
        self.root.join(&self.frames[index].image)
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    /// Frame rate implied by the first two frames.
    pub fn frame_rate(&self) -> f64 {
        match self.frames.as_slice() {
            [a, b, ..] => 1.0 / (b.t - a.t),
            _ => 1.0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = ManifestFile {
            frames: self.frames.clone(),
            imu: self.imu_file.clone(),
            groundtruth: self.groundtruth_file.clone(),
            groundtruth_format: self.groundtruth_format,
            intrinsics: self.intrinsics,
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

/// Accepts the manifest file itself or the directory holding `manifest.json`.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let path = if path.is_dir() {
        path.join(MANIFEST_NAME)
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(vec![path.clone()]),
        _ => Error::Io(e),
    })?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    file.intrinsics.validate()?;
    for (i, w) in file.frames.windows(2).enumerate() {
        if !(w[1].t > w[0].t) {
            return Err(Error::DataIntegrity {
                path: path.clone(),
                line: 0,
                msg: format!("frame {} timestamp {} does not follow {}", i + 1, w[1].t, w[0].t),
            });
        }
    }
    let missing: Vec<PathBuf> = file
        .frames
        .iter()
        .map(|f| &f.image)
        .chain([&file.imu, &file.groundtruth])
        .map(|p| root.join(p))
        .filter(|p| !p.is_file())
        .collect();
    if !missing.is_empty() {
        return Err(Error::NotFound(missing));
    }
    Ok(DatasetManifest {
        root,
        frames: file.frames,
        imu_file: file.imu,
        groundtruth_file: file.groundtruth,
        groundtruth_format: file.groundtruth_format,
        intrinsics: file.intrinsics,
    })
}

/// A manifest with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub images: Vec<Image>,
    pub imu: Vec<ImuSample>,
    pub groundtruth: Vec<GroundTruthPose>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Dataset> {
        let manifest = load_manifest(path)?;
        let images = (0..manifest.frames.len())
            .map(|i| {
                let img = Image::read_pgm(&manifest.image_path(i))?;
                if img.width() != manifest.intrinsics.width || img.height() != manifest.intrinsics.height {
                    return Err(Error::DataIntegrity {
                        path: manifest.image_path(i),
                        line: 0,
                        msg: format!(
                            "image is {}x{}, intrinsics say {}x{}",
                            img.width(),
                            img.height(),
                            manifest.intrinsics.width,
                            manifest.intrinsics.height
                        ),
                    });
                }
                Ok(img)
            })
            .collect::<Result<Vec<_>>>()?;
        let imu = load_imu_csv(&manifest.root.join(&manifest.imu_file))?;
        let gt_path = manifest.root.join(&manifest.groundtruth_file);
        let groundtruth = match manifest.groundtruth_format {
            GroundTruthFormat::Tum => load_tum_poses(&gt_path)?,
            GroundTruthFormat::Kitti => load_kitti_poses(&gt_path, manifest.frame_rate())?,
        };
        if groundtruth.len() != images.len() {
            return Err(Error::DataIntegrity {
                path: gt_path,
                line: 0,
                msg: format!("{} poses for {} frames", groundtruth.len(), images.len()),
            });
        }
        Ok(Dataset {
            manifest,
            images,
            imu,
            groundtruth,
        })
    }

    /// Ground-truth poses re-anchored so the first is the identity.
    pub fn anchored_groundtruth(&self) -> Vec<Pose> {
        anchor(&self.groundtruth.iter().map(|g| g.pose).collect::<Vec<_>>())
    }

    /// IMU start state at a frame timestamp: ground-truth pose with a
    /// central-difference velocity.
    pub fn start_state(&self, t: f64) -> ImuState {
        groundtruth_state(&self.groundtruth, t)
    }

    /// Consecutive windows of `window_size` intervals supervised by IMU
    /// proxies converted to per-interval relative motions.
    pub fn training_windows(&self, window_size: usize) -> Result<Vec<TrainingWindow>> {
        let stamps = self.manifest.timestamps();
        let proxies = Strapdown::default().window_proxies(&self.imu, &stamps, window_size, |t| self.start_state(t))?;
        let firsts = crate::imu::partition_windows(stamps.len(), window_size)?;
        proxies
            .into_iter()
            .zip(firsts)
            .map(|((_, cumulative), first)| {
                let frames = self.images[first..=first + window_size].to_vec();
                TrainingWindow::new(frames, interval_targets(&cumulative))
            })
            .collect()
    }
}

pub fn anchor(poses: &[Pose]) -> Vec<Pose> {
    match poses.first() {
        Some(first) => poses.iter().map(|p| relative_pose(first, p)).collect(),
        None => Vec::new(),
    }
}

/// Pose at the nearest ground-truth sample and a velocity from the
/// derivative of the quadratic through it and its neighbours (shifted
/// inward at the ends, so the estimate stays second order there too).
pub fn groundtruth_state(gt: &[GroundTruthPose], t: f64) -> ImuState {
    if gt.is_empty() {
        return ImuState::default();
    }
    let i = gt.partition_point(|g| g.timestamp < t).min(gt.len() - 1);
    let i = if i > 0 && (gt[i - 1].timestamp - t).abs() < (gt[i].timestamp - t).abs() {
        i - 1
    } else {
        i
    };
    let velocity = match gt.len() {
        1 => Vec3::zeros(),
        2 => (gt[1].pose.translation - gt[0].pose.translation) / (gt[1].timestamp - gt[0].timestamp),
        n => {
            let c = i.clamp(1, n - 2);
            let nodes = [&gt[c - 1], &gt[c], &gt[c + 1]];
            let x = nodes.map(|g| g.timestamp);
            let at = gt[i].timestamp;
            // derivative of the Lagrange basis polynomials at `at`
            (0..3)
                .map(|j| {
                    let (a, b) = ((j + 1) % 3, (j + 2) % 3);
                    let w = ((at - x[a]) + (at - x[b])) / ((x[j] - x[a]) * (x[j] - x[b]));
                    nodes[j].pose.translation * w
                })
                .sum()
        }
    };
    ImuState::moving(gt[i].pose, velocity)
}
