use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{hartley_transform, null_vector, Correspondence, InlierStats, RansacConfig};
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;
const MIN_SAMPLE: usize = 8;

/// Essential matrix with singular values `(1, 1, 0)` (Frobenius norm sqrt 2).
/// Convention: `b^T E a = 0` for a point seen at `a` in the first view and
/// `b` in the second, with `x_b = R x_a + t` and `E = [t]x R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EssentialMatrix(Matrix3<f64>);

impl EssentialMatrix {
    /// Projects an arbitrary 3x3 matrix onto the essential manifold.
    pub fn project(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite matrix"));
        }
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut s: Vec<(f64, usize)> = svd.singular_values.iter().copied().zip(0..).collect();
        s.sort_by(|a, b| b.0.total_cmp(&a.0));
        if s[1].0 <= 0.0 {
            return Err(Error::DegenerateInput("matrix has rank < 2".into()));
        }
        let mut d = Matrix3::zeros();
        d[(s[0].1, s[0].1)] = 1.0;
        d[(s[1].1, s[1].1)] = 1.0;
        Ok(EssentialMatrix(u * d * vt))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn residual(&self, c: &Correspondence) -> f64 {
        let a = Vector3::new(c.a.x, c.a.y, 1.0);
        let b = Vector3::new(c.b.x, c.b.y, 1.0);
        b.dot(&(self.0 * a))
    }
}

/// First-order geometric distance of a correspondence to the epipolar
/// constraint, in normalized image units.
pub fn sampson_distance(e: &EssentialMatrix, c: &Correspondence) -> f64 {
    let m = e.matrix();
    let a = Vector3::new(c.a.x, c.a.y, 1.0);
    let b = Vector3::new(c.b.x, c.b.y, 1.0);
    let ea = m * a;
    let etb = m.transpose() * b;
    let denom = ea.x * ea.x + ea.y * ea.y + etb.x * etb.x + etb.y * etb.y;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    b.dot(&ea).abs() / denom.sqrt()
}

/// Normalized eight-point algorithm over all given correspondences.
pub fn eight_point(corrs: &[Correspondence]) -> Result<EssentialMatrix> {
    if corrs.len() < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: corrs.len(),
        });
    }
    let ta = hartley_transform(corrs.iter().map(|c| &c.a));
    let tb = hartley_transform(corrs.iter().map(|c| &c.b));
    let rows: Vec<[f64; 9]> = corrs
        .iter()
        .map(|c| {
            let a = super::apply_h(&ta, &c.a);
            let b = super::apply_h(&tb, &c.b);
            [
                b.x * a.x,
                b.x * a.y,
                b.x,
                b.y * a.x,
                b.y * a.y,
                b.y,
                a.x,
                a.y,
                1.0,
            ]
        })
        .collect();
    let (v, ratio) = null_vector(&rows);
    if ratio < RANK_TOL {
        return Err(Error::DegenerateInput(
            "eight-point constraint matrix is rank deficient".into(),
        ));
    }
    let e_norm = Matrix3::from_row_slice(v.as_slice());
    EssentialMatrix::project(&(tb.transpose() * e_norm * ta))
}

fn inlier_mask(e: &EssentialMatrix, corrs: &[Correspondence], threshold: f64) -> Vec<bool> {
    corrs
        .iter()
        .map(|c| sampson_distance(e, c) <= threshold)
        .collect()
}

/// RANSAC over eight-point hypotheses scored by Sampson distance, followed
/// by a least-squares refit on the consensus set. Hypotheses are drawn from
/// a generator seeded with `config.rng_seed`; the first hypothesis reaching
/// the best inlier count wins.
pub fn ransac_essential(
    corrs: &[Correspondence],
    config: &RansacConfig,
) -> Result<(EssentialMatrix, InlierStats)> {
    config.validate()?;
    let n = corrs.len();
    if n < MIN_SAMPLE {
        return Err(Error::InsufficientData {
            needed: MIN_SAMPLE,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut best: Option<(EssentialMatrix, usize)> = None;
    let mut required = config.max_iterations;
    let mut iteration = 0;
    let mut subset = Vec::with_capacity(MIN_SAMPLE);
    while iteration < required {
        iteration += 1;
        subset.clear();
        subset.extend(sample(&mut rng, n, MIN_SAMPLE).iter().map(|i| corrs[i]));
        let Ok(e) = eight_point(&subset) else {
            continue;
        };
        let count = inlier_mask(&e, corrs, config.inlier_threshold)
            .iter()
            .filter(|&&b| b)
            .count();
        if best.as_ref().is_none_or(|(_, c)| count > *c) {
            best = Some((e, count));
            required = config.required_iterations(count as f64 / n as f64, MIN_SAMPLE);
        }
    }
    let (hypothesis, count) = best.ok_or_else(|| {
        Error::NoConsensus("every sampled hypothesis was degenerate".into())
    })?;
    if count < MIN_SAMPLE {
        return Err(Error::NoConsensus(format!(
            "best hypothesis has {count} inliers, need {MIN_SAMPLE}"
        )));
    }

    let consensus: Vec<Correspondence> = corrs
        .iter()
        .zip(inlier_mask(&hypothesis, corrs, config.inlier_threshold))
        .filter_map(|(c, keep)| keep.then_some(*c))
        .collect();
    let mut chosen = hypothesis;
    let mut mask = inlier_mask(&hypothesis, corrs, config.inlier_threshold);
    if let Ok(refined) = eight_point(&consensus) {
        let refined_mask = inlier_mask(&refined, corrs, config.inlier_threshold);
        if refined_mask.iter().filter(|&&b| b).count() >= count {
            chosen = refined;
            mask = refined_mask;
        }
    }
    Ok((chosen, InlierStats::from_mask(&mask)))
}
