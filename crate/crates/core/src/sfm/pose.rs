use nalgebra::{Matrix3, Vector3};

use super::{Correspondence, EssentialMatrix};
use crate::error::{Error, Result};
use crate::geometry::{RotationMatrix, Vec3};

/// One of the four `(R, t)` factorizations of an essential matrix; `t` is unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseCandidate {
    pub rotation: RotationMatrix,
    pub translation: Vec3,
}

/// SVD factorization `E = U diag(1,1,0) V^T` into `{U W V^T, U W^T V^T} x {+u3, -u3}`.
pub fn decompose_essential(e: &EssentialMatrix) -> [PoseCandidate; 4] {
    let svd = e.matrix().svd(true, true);
    let (mut u, mut vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    // order columns by descending singular value so the null direction is last
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    u = Matrix3::from_columns(&[u.column(order[0]), u.column(order[1]), u.column(order[2])]);
    vt = Matrix3::from_rows(&[vt.row(order[0]), vt.row(order[1]), vt.row(order[2])]);
    if u.determinant() < 0.0 {
        u = -u;
    }
    if vt.determinant() < 0.0 {
        vt = -vt;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let r1 = RotationMatrix::from_matrix_unchecked(u * w * vt);
    let r2 = RotationMatrix::from_matrix_unchecked(u * w.transpose() * vt);
    let t: Vec3 = u.column(2).normalize();
    [
        PoseCandidate { rotation: r1, translation: t },
        PoseCandidate { rotation: r1, translation: -t },
        PoseCandidate { rotation: r2, translation: t },
        PoseCandidate { rotation: r2, translation: -t },
    ]
}

/// Midpoint of the shortest segment between the two viewing rays, in the
/// first camera's frame. `None` when the rays are (nearly) parallel.
pub fn triangulate_midpoint(candidate: &PoseCandidate, c: &Correspondence) -> Option<Vec3> {
    let r = candidate.rotation.matrix();
    let rt = r.transpose();
    let d1 = Vector3::new(c.a.x, c.a.y, 1.0);
    let d2 = rt * Vector3::new(c.b.x, c.b.y, 1.0);
    let center2 = -(rt * candidate.translation);
    let (aa, bb, ab) = (d1.dot(&d1), d2.dot(&d2), d1.dot(&d2));
    let det = aa * bb - ab * ab;
    if det <= 1e-12 * aa * bb {
        return None;
    }
    // minimize |l1 d1 - (center2 + l2 d2)|
    let (r1, r2) = (d1.dot(&center2), d2.dot(&center2));
    let l1 = (bb * r1 - ab * r2) / det;
    let l2 = (ab * r1 - aa * r2) / det;
    Some((d1 * l1 + center2 + d2 * l2) * 0.5)
}

fn positive_depth(candidate: &PoseCandidate, c: &Correspondence) -> bool {
    triangulate_midpoint(candidate, c).is_some_and(|x| {
        let x2 = candidate.rotation.matrix() * x + candidate.translation;
        x.z > 0.0 && x2.z > 0.0
    })
}

/// Picks the candidate placing the most triangulated points in front of
/// both cameras. Returns the candidate and its supporting point count.
pub fn select_pose_cheirality(
    candidates: &[PoseCandidate],
    corrs: &[Correspondence],
) -> Result<(PoseCandidate, usize)> {
    if corrs.is_empty() || candidates.is_empty() {
        return Err(Error::InsufficientData {
            needed: 1,
            got: corrs.len().min(candidates.len()),
        });
    }
    let support: Vec<usize> = candidates
        .iter()
        .map(|cand| corrs.iter().filter(|c| positive_depth(cand, c)).count())
        .collect();
    let best = *support.iter().max().unwrap();
    let tied: Vec<usize> = (0..support.len()).filter(|&i| support[i] == best).collect();
    if tied.len() > 1 {
        return Err(Error::AmbiguousPose {
            candidates: tied,
            support: best,
        });
    }
    Ok((candidates[tied[0]], best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::skew;
    use crate::sfm::Point2;

    #[test]
    fn skew_decomposes_to_identity_and_axis() {
        let e = EssentialMatrix::project(&skew(&Vec3::new(1.0, 0.0, 0.0))).unwrap();
        let cands = decompose_essential(&e);
        let has = |sign: f64| {
            cands.iter().any(|c| {
                (c.rotation.matrix() - Matrix3::identity()).abs().max() < 1e-12
                    && (c.translation - Vec3::new(sign, 0.0, 0.0)).norm() < 1e-12
            })
        };
        assert!(has(1.0) && has(-1.0));
        for c in &cands {
            let m = c.rotation.matrix();
            assert!((m.determinant() - 1.0).abs() < 1e-12);
            assert!((m.transpose() * m - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn point_at_epipole_is_ambiguous() {
        // forward motion: the correspondence at the epipole has parallel rays
        let e = EssentialMatrix::project(&skew(&Vec3::new(0.0, 0.0, 1.0))).unwrap();
        let corr = Correspondence {
            a: Point2::zeros(),
            b: Point2::zeros(),
            source_match: 0,
        };
        let err = select_pose_cheirality(&decompose_essential(&e), &[corr]).unwrap_err();
        assert!(matches!(err, Error::AmbiguousPose { support: 0, .. }), "{err}");
    }
}
