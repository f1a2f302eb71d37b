use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nets::{NetworkConfig, NetworkParams};
use super::train::TrainConfig;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"AVOCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub network: NetworkConfig,
    pub seed: u64,
    pub train: Option<TrainConfig>,
    pub tensors: Vec<TensorEntry>,
}

/// Layout: magic, `u64` LE header length, JSON header, then every
/// parameter as LE `f64` in declaration order.
pub fn write_checkpoint(path: &Path, params: &NetworkParams, seed: u64, train: Option<&TrainConfig>) -> Result<()> {
    let named = params.named_tensors();
    let header = CheckpointHeader {
        network: params.config,
        seed,
        train: train.cloned(),
        tensors: named
            .iter()
            .map(|(n, t)| TensorEntry {
                name: n.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * params.parameter_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for (_, t) in &named {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(NetworkParams, CheckpointHeader)> {
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg,
    };
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| bad(format!("header: {e}")))?;
    let mut params = NetworkParams::init(header.network, 0)?;
    let expected: Vec<TensorEntry> = params
        .named_tensors()
        .iter()
        .map(|(n, t)| TensorEntry {
            name: n.clone(),
            shape: t.shape().to_vec(),
        })
        .collect();
    if expected != header.tensors {
        return Err(bad("tensor layout does not match the network configuration".into()));
    }
    let mut values = bytes[16 + hlen..].chunks_exact(8);
    if values.len() != params.parameter_count() || !values.remainder().is_empty() {
        return Err(bad(format!(
            "expected {} parameters, found {} bytes",
            params.parameter_count(),
            bytes.len() - 16 - hlen
        )));
    }
    for t in params.tensors_mut() {
        for v in t.data_mut() {
            *v = f64::from_le_bytes(values.next().unwrap().try_into().unwrap());
        }
    }
    Ok((params, header))
}
