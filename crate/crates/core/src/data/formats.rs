//! Text formats: KITTI pose rows, TUM trajectories and IMU CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Matrix3;

use super::GroundTruthPose;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Quaternion, RotationMatrix, Vec3};
use crate::imu::ImuSample;

pub const IMU_CSV_HEADER: &str = "t,ax,ay,az,wx,wy,wz";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn floats(path: &Path, line: usize, text: &str, sep: impl Fn(char) -> bool) -> Result<Vec<f64>> {
    text.split(sep)
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| parse_err(path, line, format!("bad number {t:?}")))
        })
        .collect()
}

/// Rows of 12 numbers, the row-major `3 x 4` matrix `[R | t]`. Frame `i`
/// gets timestamp `i / frame_rate`.
pub fn load_kitti_poses(path: &Path, frame_rate: f64) -> Result<Vec<GroundTruthPose>> {
    if !(frame_rate > 0.0) {
        return Err(Error::invalid(format!("frame rate must be positive, got {frame_rate}")));
    }
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v = floats(path, i + 1, line, char::is_whitespace)?;
        if v.len() != 12 {
            return Err(parse_err(path, i + 1, format!("expected 12 values, got {}", v.len())));
        }
        let m = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        let r = RotationMatrix::new(m)
            .or_else(|_| RotationMatrix::project(&m))
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let pose = Pose::from_rotation_matrix(&r, Vec3::new(v[3], v[7], v[11]))
            .map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        out.push(GroundTruthPose {
            timestamp: out.len() as f64 / frame_rate,
            pose,
        });
    }
    Ok(out)
}

pub fn write_kitti_poses(path: &Path, poses: &[GroundTruthPose]) -> Result<()> {
    let mut out = String::new();
    for gt in poses {
        let r = gt.pose.rotation_matrix();
        let m = r.matrix();
        let t = gt.pose.translation;
        let row: Vec<String> = (0..3)
            .flat_map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)], t[i]])
            .map(|v| format!("{v:e}"))
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// `t tx ty tz qx qy qz qw` per line; `#` starts a comment line.
pub fn load_tum_poses(path: &Path) -> Result<Vec<GroundTruthPose>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let v = floats(path, i + 1, trimmed, char::is_whitespace)?;
        if v.len() != 8 {
            return Err(parse_err(path, i + 1, format!("expected 8 values, got {}", v.len())));
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        out.push(GroundTruthPose {
            timestamp: v[0],
            pose: Pose::new(q, Vec3::new(v[1], v[2], v[3]))?,
        });
    }
    Ok(out)
}

pub fn write_tum_poses(path: &Path, poses: &[GroundTruthPose]) -> Result<()> {
    let mut out = String::from("# t tx ty tz qx qy qz qw\n");
    for gt in poses {
        let t = gt.pose.translation;
        let q = gt.pose.rotation;
        writeln!(
            out,
            "{:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
            gt.timestamp,
            t.x,
            t.y,
            t.z,
            q.x(),
            q.y(),
            q.z(),
            q.w()
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads `t,ax,ay,az,wx,wy,wz` rows; timestamps must strictly increase.
pub fn load_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == IMU_CSV_HEADER => {}
        _ => return Err(parse_err(path, 1, format!("expected header `{IMU_CSV_HEADER}`"))),
    }
    let mut out: Vec<ImuSample> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let v = floats(path, i + 1, line, |c| c == ',')?;
        if v.len() != 7 {
            return Err(parse_err(path, i + 1, format!("expected 7 values, got {}", v.len())));
        }
        if let Some(prev) = out.last() {
            if v[0] <= prev.timestamp {
                return Err(Error::DataIntegrity {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("timestamp {} does not follow {}", v[0], prev.timestamp),
                });
            }
        }
        out.push(ImuSample {
            timestamp: v[0],
            accel: Vec3::new(v[1], v[2], v[3]),
            gyro: Vec3::new(v[4], v[5], v[6]),
        });
    }
    Ok(out)
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let mut out = format!("{IMU_CSV_HEADER}\n");
    for s in samples {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            s.timestamp, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kitti_identity_and_translation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        fs::write(&p, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 5 0 1 0 0 0 0 1 0\n").unwrap();
        let poses = load_kitti_poses(&p, 10.0).unwrap();
        assert_eq!(poses[0].pose, Pose::identity());
        assert_eq!(poses[1].pose.translation, Vec3::new(5.0, 0.0, 0.0));
        assert_eq!(poses[1].timestamp, 0.1);
    }

    #[test]
    fn kitti_bad_token_count_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        fs::write(&p, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 0 0 1\n").unwrap();
        match load_kitti_poses(&p, 10.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kitti_drift_is_reprojected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("poses.txt");
        fs::write(&p, "1.001 0 0 0 0 1 0 0 0 0 0.999 0\n").unwrap();
        let poses = load_kitti_poses(&p, 10.0).unwrap();
        assert!(poses[0].pose.rotation.angle_to(&Quaternion::IDENTITY) < 1e-9);
    }

    #[test]
    fn imu_csv_rules() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imu.csv");
        fs::write(&p, "t,ax,ay,az,wx,wy,wz\n0,0,0,9.81,0,0,0\n0.005,0,0,9.81,0,0,0.1\n").unwrap();
        assert_eq!(load_imu_csv(&p).unwrap().len(), 2);
        fs::write(&p, "t,ax,ay,az,wx,wy,wz\n0,0,0,9.81,0,0,0\n0,0,0,9.81,0,0,0\n").unwrap();
        match load_imu_csv(&p) {
            Err(Error::DataIntegrity { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "time,ax\n").unwrap();
        assert!(matches!(load_imu_csv(&p), Err(Error::Parse { line: 1, .. })));
    }
}
