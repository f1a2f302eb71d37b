//! Text interchange for keypoints and descriptors computed by external
//! detectors: a `K D` header line followed by `K` lines of `x y score hex`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Descriptor, Keypoint, DESCRIPTOR_BITS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<Descriptor>,
    pub descriptor_bits: usize,
}

pub fn write_external_features(path: &Path, features: &ExternalFeatures) -> Result<()> {
    let mut out = format!("{} {}\n", features.keypoints.len(), features.descriptor_bits);
    for (kp, d) in features.keypoints.iter().zip(&features.descriptors) {
        writeln!(out, "{} {} {} {}", kp.x, kp.y, kp.score, d.to_hex(features.descriptor_bits))
            .expect("writing to a String cannot fail");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_external_features(path: &Path) -> Result<ExternalFeatures> {
    let text = fs::read_to_string(path)?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty feature file".into()))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| err(1, format!("bad header {header:?}")))?;
    let [count, bits] = head[..] else {
        return Err(err(1, format!("header must be `K D`, got {header:?}")));
    };
    if bits == 0 || bits > DESCRIPTOR_BITS {
        return Err(err(1, format!("descriptor length {bits} not in 1..={DESCRIPTOR_BITS}")));
    }
    let mut keypoints = Vec::with_capacity(count);
    let mut descriptors = Vec::with_capacity(count);
    for (idx, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(err(idx + 1, format!("expected 4 fields, got {}", toks.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| err(idx + 1, format!("bad number {s:?}")))
        };
        keypoints.push(Keypoint::new(num(toks[0])?, num(toks[1])?, num(toks[2])?));
        descriptors.push(
            Descriptor::from_hex(toks[3], bits).map_err(|e| err(idx + 1, e.to_string()))?,
        );
    }
    if keypoints.len() != count {
        return Err(err(
            1,
            format!("header declares {count} keypoints, file has {}", keypoints.len()),
        ));
    }
    Ok(ExternalFeatures {
        keypoints,
        descriptors,
        descriptor_bits: bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_count_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.txt");
        let mut d = Descriptor::default();
        d.set_bit(3, true);
        d.set_bit(100, true);
        let feats = ExternalFeatures {
            keypoints: vec![Keypoint::new(10.25, 20.5, 3.0), Keypoint::new(1.0 / 3.0, 7.0, 0.1)],
            descriptors: vec![d, Descriptor::default()],
            descriptor_bits: 128,
        };
        write_external_features(&path, &feats).unwrap();
        assert_eq!(read_external_features(&path).unwrap(), feats);

        fs::write(&path, "3 256\n1 2 3 00\n").unwrap();
        assert!(matches!(read_external_features(&path), Err(Error::Parse { .. })));
    }
}
