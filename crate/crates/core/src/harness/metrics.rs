use serde::{Deserialize, Serialize};

use crate::data::{anchor, GroundTruthPose};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::sfm::InlierStats;

use super::TrajectoryEstimate;

/// Population mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CountStats {
    pub mean: f64,
    pub std: f64,
}

impl CountStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return CountStats::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        CountStats { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InlierOutlierSummary {
    pub inliers: CountStats,
    pub outliers: CountStats,
}

pub fn inlier_outlier_summary(pairs: &[InlierStats]) -> Result<InlierOutlierSummary> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let ins: Vec<f64> = pairs.iter().map(|p| p.inlier_count as f64).collect();
    let outs: Vec<f64> = pairs.iter().map(|p| p.outlier_count as f64).collect();
    Ok(InlierOutlierSummary {
        inliers: CountStats::of(&ins),
        outliers: CountStats::of(&outs),
    })
}

/// RMS distance between estimated and true camera centres after both
/// trajectories are re-anchored at their first pose.
pub fn ate_rmse(est: &TrajectoryEstimate, gt: &[GroundTruthPose]) -> Result<f64> {
    let est_centres = est.camera_centres();
    if est_centres.len() != gt.len() {
        return Err(Error::invalid(format!(
            "estimate has {} poses, ground truth {}",
            est_centres.len(),
            gt.len()
        )));
    }
    if gt.is_empty() {
        return Ok(0.0);
    }
    let gt_anchored = anchor(&gt.iter().map(|g| g.pose).collect::<Vec<Pose>>());
    let sum: f64 = est_centres
        .iter()
        .zip(&gt_anchored)
        .map(|(e, g)| (e - g.translation).norm_squared())
        .sum();
    Ok((sum / gt.len() as f64).sqrt())
}
