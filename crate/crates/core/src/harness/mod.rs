//! Monocular VO runner, trajectory metrics and report emission.

pub mod cli;
pub mod metrics;
pub mod report;

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use metrics::{ate_rmse, inlier_outlier_summary, CountStats, InlierOutlierSummary};
pub use report::{
    compare_reports, emit_report, loss_svg, trajectory_svg, Comparison, ComparisonRow, ReportFormat, CSV_HEADER,
};

use crate::data::{synth::feature_name, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Pose, Vec3};
use crate::sfm::{
    decompose_essential, normalize_point, ransac_essential, ransac_homography, reprojection_error,
    select_pose_cheirality, Correspondence, InlierStats, Point2, RansacConfig,
};
use crate::vision::{
    compute_brief, detect_fast, detect_fast_masked, mask_reduction, match_descriptors, read_external_features,
    BinaryMask, BriefPattern, Descriptor, Image, Keypoint, MatchConfig,
};

/// Fraction of skipped pairs above which a run is rejected.
pub const MAX_SKIPPED_FRACTION: f64 = 0.2;
const MIN_MATCHES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorConfig {
    Fast {
        threshold: u8,
        max_keypoints: usize,
        brief_seed: u64,
    },
    /// Per-frame feature files `<dir>/000000.txt`, ...
    External { dir: PathBuf },
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig::Fast {
            threshold: 20,
            max_keypoints: 1000,
            brief_seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn label(&self) -> String {
        match self {
            DetectorConfig::Fast { .. } => "fast".into(),
            DetectorConfig::External { dir } => format!("external:{}", dir.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoConfig {
    pub detector: DetectorConfig,
    pub matching: MatchConfig,
    /// Sampson threshold in pixels; divided by `fx` for RANSAC.
    pub sampson_threshold_px: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub homography_threshold_px: f64,
    pub seed: u64,
}

impl Default for VoConfig {
    fn default() -> Self {
        VoConfig {
            detector: DetectorConfig::default(),
            matching: MatchConfig::default(),
            sampson_threshold_px: 1.0,
            max_iterations: 2000,
            confidence: 0.999,
            homography_threshold_px: 3.0,
            seed: 0,
        }
    }
}

impl VoConfig {
    fn essential_ransac(&self, k: &CameraIntrinsics, pair: usize) -> RansacConfig {
        RansacConfig {
            max_iterations: self.max_iterations,
            inlier_threshold: self.sampson_threshold_px / k.fx,
            confidence: self.confidence,
            rng_seed: pair_seed(self.seed, pair),
        }
    }

    fn homography_ransac(&self, pair: usize) -> RansacConfig {
        RansacConfig {
            max_iterations: self.max_iterations,
            inlier_threshold: self.homography_threshold_px,
            confidence: self.confidence,
            rng_seed: pair_seed(self.seed, pair) ^ 0x5851_F42D_4C95_7F2D,
        }
    }
}

/// Independent RANSAC seed per pair, so pairs can run in any order.
fn pair_seed(seed: u64, pair: usize) -> u64 {
    let mut z = seed ^ (pair as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleSource {
    Anchor,
    GroundTruth,
    ConstantVelocity,
}

/// Camera-from-world poses chained from the identity at frame 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEstimate {
    pub poses: Vec<Pose>,
    pub scale_sources: Vec<ScaleSource>,
}

impl TrajectoryEstimate {
    /// From world-from-camera poses, re-anchored at the first.
    pub fn from_world_poses(world_from_camera: &[Pose]) -> Self {
        let anchored = crate::data::anchor(world_from_camera);
        TrajectoryEstimate {
            poses: anchored.iter().map(Pose::inverse).collect(),
            scale_sources: (0..anchored.len())
                .map(|i| if i == 0 { ScaleSource::Anchor } else { ScaleSource::GroundTruth })
                .collect(),
        }
    }

    /// Camera centres in the anchor frame.
    pub fn camera_centres(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.inverse().translation).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub index: usize,
    pub matches: usize,
    pub inliers: usize,
    pub outliers: usize,
    /// Why the pair fell back to constant velocity, if it did.
    pub skipped: Option<String>,
    pub reprojection_px: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub detector: String,
    pub masked: bool,
    pub seed: u64,
    pub sampson_threshold_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub frames: usize,
    pub ate_rmse: f64,
    /// Over processed (non-skipped) pairs.
    pub inliers: CountStats,
    pub outliers: CountStats,
    pub mean_reprojection_px: f64,
    pub wall_time_s: f64,
    pub per_pair_time_s: f64,
    pub mask_reduction: f64,
    pub skipped_pairs: usize,
    pub pairs: Vec<PairRecord>,
    /// Camera centres in the anchor frame, for plotting.
    pub estimated_centres: Vec<[f64; 3]>,
    pub groundtruth_centres: Vec<[f64; 3]>,
    pub config: ReportConfig,
}

impl TrajectoryReport {
    /// Copy with timing fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        TrajectoryReport {
            wall_time_s: 0.0,
            per_pair_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

struct FrameFeatures {
    keypoints: Vec<Keypoint>,
    descriptors: Vec<Descriptor>,
}

enum Detector {
    Fast {
        threshold: u8,
        max_keypoints: usize,
        pattern: BriefPattern,
    },
    External(PathBuf),
}

impl Detector {
    fn new(config: &DetectorConfig) -> Self {
        match config {
            DetectorConfig::Fast {
                threshold,
                max_keypoints,
                brief_seed,
            } => Detector::Fast {
                threshold: *threshold,
                max_keypoints: *max_keypoints,
                pattern: BriefPattern::new(*brief_seed),
            },
            DetectorConfig::External { dir } => Detector::External(dir.clone()),
        }
    }

    fn features(&self, frame: usize, img: &Image, mask: Option<&BinaryMask>) -> Result<FrameFeatures> {
        match self {
            Detector::Fast {
                threshold,
                max_keypoints,
                pattern,
            } => {
                let kps = match mask {
                    Some(m) => detect_fast_masked(img, *threshold, *max_keypoints, m)?,
                    None => detect_fast(img, *threshold, *max_keypoints),
                };
                let (descriptors, index) = compute_brief(img, &kps, pattern);
                Ok(FrameFeatures {
                    keypoints: index.iter().map(|&i| kps[i]).collect(),
                    descriptors,
                })
            }
            Detector::External(dir) => {
                let f = read_external_features(&dir.join(feature_name(frame)))?;
                let keep: Vec<bool> = match mask {
                    Some(m) => {
                        let bs = m.block_size() as f64;
                        f.keypoints
                            .iter()
                            .map(|k| {
                                let (r, c) = ((k.y / bs) as usize, (k.x / bs) as usize);
                                r < m.rows() && c < m.cols() && m.get(r, c)
                            })
                            .collect()
                    }
                    None => vec![true; f.keypoints.len()],
                };
                Ok(FrameFeatures {
                    keypoints: f.keypoints.iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect(),
                    descriptors: f.descriptors.iter().zip(&keep).filter(|(_, &k)| k).map(|(d, _)| *d).collect(),
                })
            }
        }
    }
}

/// Result of one frame pair inside the timed loop.
struct PairOutcome {
    matches: usize,
    pixel_pairs: Vec<(Point2, Point2)>,
    stats: Option<InlierStats>,
    /// Camera-a to camera-b motion with unit translation.
    motion: Option<Pose>,
    skipped: Option<String>,
}

fn process_pair(a: &FrameFeatures, b: &FrameFeatures, k: &CameraIntrinsics, config: &VoConfig, pair: usize) -> PairOutcome {
    let matches = match_descriptors(&a.descriptors, &b.descriptors, &config.matching);
    let pixel_pairs: Vec<(Point2, Point2)> = matches
        .iter()
        .map(|m| {
            let (p, q) = (a.keypoints[m.index_a], b.keypoints[m.index_b]);
            (Point2::new(p.x, p.y), Point2::new(q.x, q.y))
        })
        .collect();
    let mut outcome = PairOutcome {
        matches: matches.len(),
        pixel_pairs,
        stats: None,
        motion: None,
        skipped: None,
    };
    if matches.len() < MIN_MATCHES {
        outcome.skipped = Some(format!("{} matches, need {MIN_MATCHES}", matches.len()));
        return outcome;
    }
    let corrs: Vec<Correspondence> = outcome
        .pixel_pairs
        .iter()
        .enumerate()
        .map(|(i, (p, q))| Correspondence {
            a: normalize_point(p.x, p.y, k),
            b: normalize_point(q.x, q.y, k),
            source_match: i,
        })
        .collect();
    let step = ransac_essential(&corrs, &config.essential_ransac(k, pair)).and_then(|(e, stats)| {
        let inliers: Vec<Correspondence> = stats.inlier_indices.iter().map(|&i| corrs[i]).collect();
        let (cand, _) = select_pose_cheirality(&decompose_essential(&e), &inliers)?;
        let pose = Pose::from_rotation_matrix(&cand.rotation, cand.translation)?;
        Ok((pose, stats))
    });
    match step {
        Ok((pose, stats)) => {
            outcome.motion = Some(pose);
            outcome.stats = Some(stats);
        }
        Err(e) => outcome.skipped = Some(e.to_string()),
    }
    outcome
}

fn check_masks(dataset: &Dataset, masks: Option<&[BinaryMask]>) -> Result<()> {
    if let Some(masks) = masks {
        if masks.len() != dataset.images.len() {
            return Err(Error::invalid(format!(
                "{} masks for {} frames",
                masks.len(),
                dataset.images.len()
            )));
        }
        for (m, img) in masks.iter().zip(&dataset.images) {
            m.check_image(img.width(), img.height())?;
        }
    }
    Ok(())
}

/// Runs the full detect, match, RANSAC, decompose and chain loop over
/// every consecutive frame pair. Translations are scaled by the ground
/// truth inter-frame distance; a pair without a usable estimate repeats
/// the previous motion.
pub fn run_vo(
    dataset: &Dataset,
    config: &VoConfig,
    masks: Option<&[BinaryMask]>,
) -> Result<(TrajectoryEstimate, TrajectoryReport)> {
    check_masks(dataset, masks)?;
    let n = dataset.images.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let k = dataset.manifest.intrinsics;
    let detector = Detector::new(&config.detector);
    let mask_of = |i: usize| masks.map(|m| &m[i]);

    let started = Instant::now();
    let mut outcomes = Vec::with_capacity(n - 1);
    let mut prev = detector.features(0, &dataset.images[0], mask_of(0))?;
    for i in 0..n - 1 {
        let next = detector.features(i + 1, &dataset.images[i + 1], mask_of(i + 1))?;
        outcomes.push(process_pair(&prev, &next, &k, config, i));
        prev = next;
    }
    let wall = started.elapsed().as_secs_f64();

    let skipped = outcomes.iter().filter(|o| o.skipped.is_some()).count();
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(why) = &o.skipped {
            log::warn!("frame pair {i} skipped: {why}");
        }
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * (n - 1) as f64 {
        return Err(Error::RunDegenerate { skipped, total: n - 1 });
    }

    let gt = &dataset.groundtruth;
    let mut poses = vec![Pose::identity()];
    let mut sources = vec![ScaleSource::Anchor];
    let mut last_step = Pose::identity();
    for (i, o) in outcomes.iter().enumerate() {
        let step = match o.motion {
            Some(m) => {
                let scale = (gt[i + 1].pose.translation - gt[i].pose.translation).norm();
                sources.push(ScaleSource::GroundTruth);
                Pose {
                    rotation: m.rotation,
                    translation: m.translation * scale,
                }
            }
            None => {
                sources.push(ScaleSource::ConstantVelocity);
                last_step
            }
        };
        last_step = step;
        poses.push(step.compose(&poses[i]));
    }
    let estimate = TrajectoryEstimate {
        poses,
        scale_sources: sources,
    };

    let mut records = Vec::with_capacity(outcomes.len());
    let mut reproj = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let r = if o.skipped.is_none() {
            pair_reprojection(&o.pixel_pairs, config, i)
        } else {
            None
        };
        reproj.extend(r);
        let stats = o.stats.clone().unwrap_or_default();
        records.push(PairRecord {
            index: i,
            matches: o.matches,
            inliers: stats.inlier_count,
            outliers: stats.outlier_count,
            skipped: o.skipped.clone(),
            reprojection_px: r,
        });
    }
    let processed: Vec<InlierStats> = outcomes.iter().filter_map(|o| o.stats.clone()).collect();
    let summary = if processed.is_empty() {
        InlierOutlierSummary::default()
    } else {
        inlier_outlier_summary(&processed)?
    };
    let reduction = match masks {
        Some(ms) => ms.iter().map(mask_reduction).sum::<f64>() / ms.len() as f64,
        None => 0.0,
    };
    let report = TrajectoryReport {
        frames: n,
        ate_rmse: ate_rmse(&estimate, gt)?,
        inliers: summary.inliers,
        outliers: summary.outliers,
        mean_reprojection_px: mean(&reproj),
        wall_time_s: wall,
        per_pair_time_s: wall / (n - 1) as f64,
        mask_reduction: reduction,
        skipped_pairs: skipped,
        pairs: records,
        estimated_centres: estimate.camera_centres().iter().map(|c| [c.x, c.y, c.z]).collect(),
        groundtruth_centres: dataset
            .anchored_groundtruth()
            .iter()
            .map(|p| [p.translation.x, p.translation.y, p.translation.z])
            .collect(),
        config: ReportConfig {
            detector: config.detector.label(),
            masked: masks.is_some(),
            seed: config.seed,
            sampson_threshold_px: config.sampson_threshold_px,
        },
    };
    Ok((estimate, report))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean homography reprojection error over the RANSAC inliers of a pair.
fn pair_reprojection(pairs: &[(Point2, Point2)], config: &VoConfig, index: usize) -> Option<f64> {
    let (h, stats) = ransac_homography(pairs, &config.homography_ransac(index)).ok()?;
    let inliers: Vec<(Point2, Point2)> = stats.inlier_indices.iter().map(|&i| pairs[i]).collect();
    reprojection_error(&h, &inliers).ok().map(|r| r.mean)
}

/// Average homography reprojection error over all frame pairs, with the
/// same detection, masking and skip rules as [`run_vo`].
pub fn reprojection_summary(dataset: &Dataset, config: &VoConfig, masks: Option<&[BinaryMask]>) -> Result<f64> {
    check_masks(dataset, masks)?;
    let n = dataset.images.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let detector = Detector::new(&config.detector);
    let mask_of = |i: usize| masks.map(|m| &m[i]);
    let mut values = Vec::new();
    let mut skipped = 0;
    let mut prev = detector.features(0, &dataset.images[0], mask_of(0))?;
    for i in 0..n - 1 {
        let next = detector.features(i + 1, &dataset.images[i + 1], mask_of(i + 1))?;
        let matches = match_descriptors(&prev.descriptors, &next.descriptors, &config.matching);
        let pairs: Vec<(Point2, Point2)> = matches
            .iter()
            .map(|m| {
                let (p, q) = (prev.keypoints[m.index_a], next.keypoints[m.index_b]);
                (Point2::new(p.x, p.y), Point2::new(q.x, q.y))
            })
            .collect();
        match (pairs.len() >= MIN_MATCHES).then(|| pair_reprojection(&pairs, config, i)).flatten() {
            Some(r) => values.push(r),
            None => skipped += 1,
        }
        prev = next;
    }
    if skipped as f64 > MAX_SKIPPED_FRACTION * (n - 1) as f64 {
        return Err(Error::RunDegenerate { skipped, total: n - 1 });
    }
    Ok(mean(&values))
}
