//! Two-view epipolar geometry: essential-matrix estimation inside RANSAC,
//! pose recovery, and homography-based reprojection error.

mod essential;
mod homography;
mod pose;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::CameraIntrinsics;

pub use essential::{eight_point, ransac_essential, sampson_distance, EssentialMatrix};
pub use homography::{
    homography_dlt, ransac_homography, reprojection_error, symmetric_transfer_error,
    ReprojectionError,
};
pub use pose::{decompose_essential, select_pose_cheirality, triangulate_midpoint, PoseCandidate};

pub type Point2 = Vector2<f64>;

/// A point pair in normalized camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub a: Point2,
    pub b: Point2,
    pub source_match: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Sampson distance in normalized coordinates for essential matrices,
    /// symmetric transfer error in pixels for homographies.
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            max_iterations: 2000,
            inlier_threshold: 1e-3,
            confidence: 0.999,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn homography() -> Self {
        RansacConfig {
            inlier_threshold: 3.0,
            ..RansacConfig::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(self.inlier_threshold > 0.0) || !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(crate::Error::invalid(format!(
                "invalid RANSAC config {self:?}: need threshold > 0 and 0 < confidence < 1"
            )));
        }
        Ok(())
    }

    /// Iterations needed to draw one all-inlier sample with the configured
    /// confidence, capped at `max_iterations`.
    pub(crate) fn required_iterations(&self, inlier_ratio: f64, sample_size: usize) -> usize {
        let p_good = inlier_ratio.powi(sample_size as i32);
        if p_good >= 1.0 {
            return 1;
        }
        if p_good <= 0.0 {
            return self.max_iterations;
        }
        let n = (1.0 - self.confidence).ln() / (1.0 - p_good).ln();
        if n.is_finite() {
            (n.ceil() as usize).clamp(1, self.max_iterations)
        } else {
            self.max_iterations
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InlierStats {
    pub inlier_count: usize,
    pub outlier_count: usize,
    pub inlier_indices: Vec<usize>,
}

impl InlierStats {
    pub(crate) fn from_mask(mask: &[bool]) -> Self {
        let inlier_indices: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        InlierStats {
            inlier_count: inlier_indices.len(),
            outlier_count: mask.len() - inlier_indices.len(),
            inlier_indices,
        }
    }
}

pub fn normalize_point(x: f64, y: f64, k: &CameraIntrinsics) -> Point2 {
    Point2::new((x - k.cx) / k.fx, (y - k.cy) / k.fy)
}

pub fn denormalize_point(p: &Point2, k: &CameraIntrinsics) -> (f64, f64) {
    (p.x * k.fx + k.cx, p.y * k.fy + k.cy)
}

pub fn normalize_points(pixels: &[(f64, f64)], k: &CameraIntrinsics) -> Vec<Point2> {
    pixels.iter().map(|&(x, y)| normalize_point(x, y, k)).collect()
}

/// Similarity taking the points to centroid zero and RMS radius sqrt(2).
pub(crate) fn hartley_transform<'a>(points: impl Iterator<Item = &'a Point2> + Clone) -> Matrix3<f64> {
    let n = points.clone().count().max(1) as f64;
    let centroid = points.clone().fold(Point2::zeros(), |acc, p| acc + p) / n;
    let ms = points.map(|p| (p - centroid).norm_squared()).sum::<f64>() / n;
    let s = if ms > 0.0 { (2.0 / ms).sqrt() } else { 1.0 };
    Matrix3::new(s, 0.0, -s * centroid.x, 0.0, s, -s * centroid.y, 0.0, 0.0, 1.0)
}

pub(crate) fn apply_h(t: &Matrix3<f64>, p: &Point2) -> Point2 {
    let v = t * Vector3::new(p.x, p.y, 1.0);
    Point2::new(v.x / v.z, v.y / v.z)
}

/// Unit-norm right null vector of the stacked rows (zero-padded to 9 rows),
/// plus the ratio of the second-smallest to largest singular value.
pub(crate) fn null_vector(rows: &[[f64; 9]]) -> (nalgebra::SVector<f64, 9>, f64) {
    let n = rows.len().max(9);
    let mut a = nalgebra::DMatrix::<f64>::zeros(n, 9);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let smallest = order[8];
    let largest = svd.singular_values[order[0]];
    let second = svd.singular_values[order[7]];
    let v = nalgebra::SVector::<f64, 9>::from_iterator(vt.row(smallest).iter().copied());
    let ratio = if largest > 0.0 { second / largest } else { 0.0 };
    (v, ratio)
}
