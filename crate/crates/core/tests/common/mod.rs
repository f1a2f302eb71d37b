//! Synthetic two-view scenes with known ground truth.
#![allow(dead_code)]

pub mod autodiff_cases;
pub mod gradcheck;

use attnvo::geometry::{so3_exp, RotationMatrix, Vec3};
use attnvo::sfm::{sampson_distance, Correspondence, EssentialMatrix, Point2};
use attnvo::geometry::skew;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct TwoViewScene {
    pub rotation: RotationMatrix,
    /// Unit translation, `x_b = R x_a + t`.
    pub translation: Vec3,
    pub corrs: Vec<Correspondence>,
    /// `true` for planted outliers.
    pub is_outlier: Vec<bool>,
}

impl TwoViewScene {
    pub fn true_essential(&self) -> EssentialMatrix {
        EssentialMatrix::project(&(skew(&self.translation) * self.rotation.matrix())).unwrap()
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Random rigid motion observed through `inliers` noise-free correspondences
/// with depth in both views between 2 and 12, plus `outliers` pairs whose
/// second point is redrawn uniformly until it sits at least
/// `outlier_margin` (Sampson distance) away from the true epipolar line.
pub fn two_view_scene(seed: u64, inliers: usize, outliers: usize, outlier_margin: f64) -> TwoViewScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let angle = rng.random_range(0.02..0.4);
    let rotation = so3_exp(&(random_unit(&mut rng) * angle));
    let translation = random_unit(&mut rng);
    let mut corrs = Vec::new();
    while corrs.len() < inliers {
        let x = Vec3::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-4.0..4.0),
            rng.random_range(2.0..12.0),
        );
        let xb = rotation * x + translation;
        if xb.z < 2.0 {
            continue;
        }
        let (a, b) = (Point2::new(x.x / x.z, x.y / x.z), Point2::new(xb.x / xb.z, xb.y / xb.z));
        if a.abs().max() > 1.0 || b.abs().max() > 1.0 {
            continue;
        }
        corrs.push(Correspondence { a, b, source_match: corrs.len() });
    }
    let mut scene = TwoViewScene {
        rotation,
        translation,
        is_outlier: vec![false; inliers],
        corrs,
    };
    let e = scene.true_essential();
    let mut planted = 0;
    while planted < outliers {
        let c = Correspondence {
            a: Point2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)),
            b: Point2::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)),
            source_match: scene.corrs.len(),
        };
        if sampson_distance(&e, &c) < outlier_margin {
            continue;
        }
        scene.corrs.push(c);
        scene.is_outlier.push(true);
        planted += 1;
    }
    // interleave outliers with inliers deterministically
    let mut order: Vec<usize> = (0..scene.corrs.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    scene.corrs = order.iter().map(|&i| scene.corrs[i]).collect();
    scene.is_outlier = order.iter().map(|&i| scene.is_outlier[i]).collect();
    for (k, c) in scene.corrs.iter_mut().enumerate() {
        c.source_match = k;
    }
    scene
}

pub fn rotation_angle_between(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
    (a.transpose() * *b).angle()
}

pub fn direction_angle(a: &Vec3, b: &Vec3) -> f64 {
    let c = a.normalize().cross(&b.normalize()).norm();
    let d = a.normalize().dot(&b.normalize());
    c.atan2(d)
}
