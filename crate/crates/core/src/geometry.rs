//! Rigid-body math shared by the IMU, vision, epipolar and learning code.
//!
//! Conventions: quaternions are scalar-first `(w, x, y, z)`, rotations are
//! active, and the world frame is right-handed. A [`Pose`] maps points from
//! its local frame into its parent frame: `p_parent = R * p_local + t`.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const SMALL_ANGLE: f64 = 1e-8;
/// Rotations closer than this to pi have no unique log axis.
const DEGENERATE_PI_MARGIN: f64 = 1e-6;
/// Below this distance from pi, the log map switches to the eigen-based axis.
const NEAR_PI_BRANCH: f64 = 1e-2;
const ORTHONORMAL_TOL: f64 = 1e-6;

/// Unit quaternion, scalar first, stored with canonical sign (`w >= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes and canonicalizes the given components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        if ![w, x, y, z].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite quaternion ({w}, {x}, {y}, {z})"
            )));
        }
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if n < 1e-300 {
            return Err(Error::invalid("zero-norm quaternion"));
        }
        Ok(Self::canonical(w / n, x / n, y / n, z / n))
    }

    fn canonical(w: f64, x: f64, y: f64, z: f64) -> Self {
        let flip = if w != 0.0 {
            w < 0.0
        } else if x != 0.0 {
            x < 0.0
        } else if y != 0.0 {
            y < 0.0
        } else {
            z < 0.0
        };
        if flip {
            Quaternion {
                w: -w,
                x: -x,
                y: -y,
                z: -z,
            }
        } else {
            Quaternion { w, x, y, z }
        }
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self::canonical(w / n, x / n, y / n, z / n)
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn vector(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n.is_finite() && angle.is_finite()) || n == 0.0 {
            return Err(Error::invalid("axis must be finite and non-zero"));
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Quaternion exponential of a rotation vector (axis times angle).
    pub fn exp(rotvec: &Vec3) -> Self {
        let theta = rotvec.norm();
        let half = 0.5 * theta;
        let (w, k) = if theta < SMALL_ANGLE {
            // sin(h)/theta ~= 1/2 - theta^2/48
            (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
        } else {
            (half.cos(), half.sin() / theta)
        };
        Self::renormalized(w, rotvec.x * k, rotvec.y * k, rotvec.z * k)
    }

    /// Rotation vector with angle in `[0, pi]`.
    pub fn log(&self) -> Vec3 {
        let v = self.vector();
        let s = v.norm();
        if s < SMALL_ANGLE {
            return v * (2.0 / self.w);
        }
        let theta = 2.0 * s.atan2(self.w);
        v * (theta / s)
    }

    pub fn conjugate(&self) -> Self {
        Quaternion {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .recanonical()
    }

    fn recanonical(self) -> Self {
        Self::canonical(self.w, self.x, self.y, self.z)
    }

    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    /// Rotates `v` actively by this quaternion.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = self.vector();
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn angle_to(&self, other: &Quaternion) -> f64 {
        (self.inverse() * *other).log().norm()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product.
    fn mul(self, r: Quaternion) -> Quaternion {
        let l = self;
        Quaternion::renormalized(
            l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z,
            l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y,
            l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x,
            l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w,
        )
    }
}

impl TryFrom<[f64; 4]> for Quaternion {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Quaternion::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        q.to_array()
    }
}

/// Orthonormal 3x3 matrix with determinant +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix(Mat3::identity())
    }

    /// Validates orthonormality and orientation within `1e-6`.
    pub fn new(m: Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite rotation matrix"));
        }
        let err = (m.transpose() * m - Mat3::identity()).abs().max();
        if err > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "matrix is not orthonormal (max |R^T R - I| = {err:.3e})"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::invalid(format!(
                "rotation determinant {det} is not +1"
            )));
        }
        Ok(RotationMatrix(m))
    }

    /// Nearest rotation in the Frobenius sense (SVD projection).
    pub fn project(m: &Mat3) -> Result<Self> {
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite matrix"));
        }
        let svd = m.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut d = Mat3::identity();
        if (u * vt).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Ok(RotationMatrix(u * d * vt))
    }

    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        RotationMatrix(m)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        RotationMatrix(self.0.transpose())
    }

    pub fn angle(&self) -> f64 {
        let v = vee(&(self.0 - self.0.transpose())) * 0.5;
        v.norm().atan2(0.5 * (self.0.trace() - 1.0))
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

pub fn quat_to_rotmat(q: &Quaternion) -> RotationMatrix {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    RotationMatrix(Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Shepperd's method: picks the numerically largest of `w, x, y, z` first.
pub fn rotmat_to_quat(r: &RotationMatrix) -> Quaternion {
    let m = &r.0;
    let trace = m.trace();
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (w, x, y, z);
    if trace >= diag[0] && trace >= diag[1] && trace >= diag[2] {
        let s = 2.0 * (1.0 + trace).sqrt();
        w = 0.25 * s;
        x = (m[(2, 1)] - m[(1, 2)]) / s;
        y = (m[(0, 2)] - m[(2, 0)]) / s;
        z = (m[(1, 0)] - m[(0, 1)]) / s;
    } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
        let s = 2.0 * (1.0 + diag[0] - diag[1] - diag[2]).sqrt();
        w = (m[(2, 1)] - m[(1, 2)]) / s;
        x = 0.25 * s;
        y = (m[(0, 1)] + m[(1, 0)]) / s;
        z = (m[(0, 2)] + m[(2, 0)]) / s;
    } else if diag[1] >= diag[2] {
        let s = 2.0 * (1.0 + diag[1] - diag[0] - diag[2]).sqrt();
        w = (m[(0, 2)] - m[(2, 0)]) / s;
        x = (m[(0, 1)] + m[(1, 0)]) / s;
        y = 0.25 * s;
        z = (m[(1, 2)] + m[(2, 1)]) / s;
    } else {
        let s = 2.0 * (1.0 + diag[2] - diag[0] - diag[1]).sqrt();
        w = (m[(1, 0)] - m[(0, 1)]) / s;
        x = (m[(0, 2)] + m[(2, 0)]) / s;
        y = (m[(1, 2)] + m[(2, 1)]) / s;
        z = 0.25 * s;
    }
    Quaternion::renormalized(w, x, y, z)
}

/// Cross-product matrix: `skew(v) * u == v.cross(u)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Quaternion rate matrix for body-frame angular velocity `w`, acting on
/// scalar-first quaternions: `q_dot = 0.5 * omega_matrix(w) * q`.
pub fn omega_matrix(w: &Vec3) -> Matrix4<f64> {
    Matrix4::new(
        0.0, -w.x, -w.y, -w.z, //
        w.x, 0.0, w.z, -w.y, //
        w.y, -w.z, 0.0, w.x, //
        w.z, w.y, -w.x, 0.0,
    )
}

pub fn so3_exp(v: &Vec3) -> RotationMatrix {
    let theta = v.norm();
    let k = skew(v);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    RotationMatrix(Mat3::identity() + k * a + k * k * b)
}

/// Rotation vector of `r`. Fails when the angle is within `1e-6` of pi,
/// where the rotation axis sign is ambiguous.
pub fn so3_log(r: &RotationMatrix) -> Result<Vec3> {
    let m = &r.0;
    let axis_sin = vee(&(m - m.transpose())) * 0.5;
    let s = axis_sin.norm();
    let c = 0.5 * (m.trace() - 1.0);
    let theta = s.atan2(c);
    if PI - theta < DEGENERATE_PI_MARGIN {
        return Err(Error::DegenerateRotation(format!(
            "rotation angle {theta} is within {DEGENERATE_PI_MARGIN:e} of pi"
        )));
    }
    if theta < SMALL_ANGLE {
        // theta / sin(theta) ~= 1 + theta^2/6
        return Ok(axis_sin * (1.0 + theta * theta / 6.0));
    }
    if PI - theta < NEAR_PI_BRANCH {
        // R + R^T = 2cI + 2(1-c) a a^T; the axis is the top eigenvector.
        let sym = (m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let idx = eig.eigenvalues.imax();
        let mut axis: Vec3 = eig.eigenvectors.column(idx).into_owned();
        if axis.dot(&axis_sin) < 0.0 {
            axis = -axis;
        }
        return Ok(axis.normalize() * theta);
    }
    Ok(axis_sin * (theta / s))
}

/// Rigid transform mapping local coordinates into the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Quaternion,
    #[serde(with = "vec3_serde")]
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Quaternion::IDENTITY,
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Quaternion, translation: Vec3) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite translation"));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_rotation_matrix(r: &RotationMatrix, translation: Vec3) -> Result<Self> {
        Pose::new(rotmat_to_quat(r), translation)
    }

    pub fn rotation_matrix(&self) -> RotationMatrix {
        quat_to_rotmat(&self.rotation)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        pose_compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        pose_inverse(self)
    }
}

pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation.rotate(&b.translation) + a.translation,
    }
}

pub fn pose_inverse(a: &Pose) -> Pose {
    let inv = a.rotation.inverse();
    Pose {
        rotation: inv,
        translation: -inv.rotate(&a.translation),
    }
}

/// `inverse(a) * b`: `b` expressed in the frame of `a`.
pub fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    pose_compose(&pose_inverse(a), b)
}

pub(crate) mod vec3_serde {
    use super::Vec3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Vec3, s: S) -> Result<S::Ok, S::Error> {
        [v.x, v.y, v.z].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3::new(a[0], a[1], a[2]))
    }
}

/// Pinhole intrinsics; image size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.cx > 0.0
            && self.cx < self.width as f64
            && self.cy > 0.0
            && self.cy < self.height as f64;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid camera intrinsics {self:?}")))
        }
    }

    /// Projects a camera-frame point; `None` when behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 1e-9 {
            return None;
        }
        Some((
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}
