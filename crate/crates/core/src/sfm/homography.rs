use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_h, hartley_transform, null_vector, InlierStats, Point2, RansacConfig};
use crate::error::{Error, Result};

const MIN_SAMPLE: usize = 4;
const RANK_TOL: f64 = 1e-9;
const AT_INFINITY: f64 = 1e-12;

/// Normalized DLT over all pairs `(p, p')` with `p' ~ H p`; scaled so `h33 = 1`
/// whenever `|h33| > 1e-12`.
pub fn homography_dlt(pairs: &[(Point2, Point2)]) -> Result<Matrix3<f64>> {
    if pairs.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: pairs.len(),
        });
    }
    let ta = hartley_transform(pairs.iter().map(|p| &p.0));
    let tb = hartley_transform(pairs.iter().map(|p| &p.1));
    let mut rows = Vec::with_capacity(2 * pairs.len());
    for (p, q) in pairs {
        let a = apply_h(&ta, p);
        let b = apply_h(&tb, q);
        rows.push([0.0, 0.0, 0.0, -a.x, -a.y, -1.0, b.y * a.x, b.y * a.y, b.y]);
        rows.push([a.x, a.y, 1.0, 0.0, 0.0, 0.0, -b.x * a.x, -b.x * a.y, -b.x]);
    }
    let (v, ratio) = null_vector(&rows);
    if ratio < RANK_TOL {
        return Err(Error::DegenerateInput("homography constraints are rank deficient".into()));
    }
    let h_norm = Matrix3::from_row_slice(v.as_slice());
    let tb_inv = tb
        .try_inverse()
        .ok_or_else(|| Error::DegenerateInput("singular normalization".into()))?;
    let mut h = tb_inv * h_norm * ta;
    if h[(2, 2)].abs() > AT_INFINITY {
        h /= h[(2, 2)];
    } else {
        h /= h.norm();
    }
    Ok(h)
}

fn project(h: &Matrix3<f64>, p: &Point2) -> Option<Point2> {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    (v.z.abs() > AT_INFINITY).then(|| Point2::new(v.x / v.z, v.y / v.z))
}

/// RMS of the forward and backward transfer distances, in pixels.
pub fn symmetric_transfer_error(h: &Matrix3<f64>, h_inv: &Matrix3<f64>, p: &Point2, q: &Point2) -> f64 {
    match (project(h, p), project(h_inv, q)) {
        (Some(fp), Some(bq)) => (0.5 * ((fp - q).norm_squared() + (bq - p).norm_squared())).sqrt(),
        _ => f64::INFINITY,
    }
}

fn inlier_mask(h: &Matrix3<f64>, pairs: &[(Point2, Point2)], threshold: f64) -> Option<Vec<bool>> {
    let h_inv = h.try_inverse()?;
    Some(
        pairs
            .iter()
            .map(|(p, q)| symmetric_transfer_error(h, &h_inv, p, q) <= threshold)
            .collect(),
    )
}

/// RANSAC over 4-point DLT hypotheses scored by symmetric transfer error,
/// refit on the consensus set.
pub fn ransac_homography(
    pairs: &[(Point2, Point2)],
    config: &RansacConfig,
) -> Result<(Matrix3<f64>, InlierStats)> {
    config.validate()?;
    let n = pairs.len();
    if n < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut best: Option<(Matrix3<f64>, usize)> = None;
    let mut required = config.max_iterations;
    let mut iteration = 0;
    let mut subset = Vec::with_capacity(MIN_SAMPLE);
    while iteration < required {
        iteration += 1;
        subset.clear();
        subset.extend(sample(&mut rng, n, MIN_SAMPLE).iter().map(|i| pairs[i]));
        let Ok(h) = homography_dlt(&subset) else {
            continue;
        };
        let Some(mask) = inlier_mask(&h, pairs, config.inlier_threshold) else {
            continue;
        };
        let count = mask.iter().filter(|&&b| b).count();
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((h, count));
            required = config.required_iterations(count as f64 / n as f64, MIN_SAMPLE);
        }
    }
    let (hypothesis, count) = best
        .ok_or_else(|| Error::NoConsensus("every sampled homography was degenerate".into()))?;
    if count < MIN_SAMPLE {
        return Err(Error::NoConsensus(format!(
            "best homography has {count} inliers, need {MIN_SAMPLE}"
        )));
    }
    let mut mask = inlier_mask(&hypothesis, pairs, config.inlier_threshold).unwrap_or_default();
    let consensus: Vec<_> = pairs
        .iter()
        .zip(&mask)
        .filter_map(|(p, &keep)| keep.then_some(*p))
        .collect();
    let mut chosen = hypothesis;
    if let Ok(refined) = homography_dlt(&consensus) {
        if let Some(refined_mask) = inlier_mask(&refined, pairs, config.inlier_threshold) {
            if refined_mask.iter().filter(|&&b| b).count() >= count {
                chosen = refined;
                mask = refined_mask;
            }
        }
    }
    Ok((chosen, InlierStats::from_mask(&mask)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReprojectionError {
    /// Mean over the points that map to finite image positions.
    pub mean: f64,
    /// `None` for points sent to the plane at infinity.
    pub per_point: Vec<Option<f64>>,
}

impl ReprojectionError {
    pub fn excluded(&self) -> Vec<usize> {
        self.per_point
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.is_none().then_some(i))
            .collect()
    }
}

/// Distance between `H p` and its matched observation for every pair.
pub fn reprojection_error(h: &Matrix3<f64>, pairs: &[(Point2, Point2)]) -> Result<ReprojectionError> {
    let per_point: Vec<Option<f64>> = pairs
        .iter()
        .map(|(p, q)| project(h, p).map(|hp| (hp - q).norm()))
        .collect();
    let valid: Vec<f64> = per_point.iter().flatten().copied().collect();
    if valid.is_empty() && !pairs.is_empty() {
        return Err(Error::DegenerateInput(
            "every point maps to the plane at infinity".into(),
        ));
    }
    let mean = if valid.is_empty() {
        0.0
    } else {
        valid.iter().sum::<f64>() / valid.len() as f64
    };
    Ok(ReprojectionError { mean, per_point })
}
