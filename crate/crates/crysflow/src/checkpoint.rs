//! Checkpoint files: magic bytes, a format version, a JSON header with the
//! configurations, statistics and tensor shapes, then every tensor as
//! little-endian f64 in header order.

use std::fs;
use std::path::Path;

use crysflow_core::flow::{LatticeStats, PathConfig};
use crysflow_core::math::Matrix;
use crysflow_core::net::init_params;
use crysflow_core::{FlowModel, NetworkConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 12] = b"CRYSFLOWCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint version {found} is not supported (expected {VERSION})")]
    VersionMismatch { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// Seed and position of the training stream that produced the parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    net: NetworkConfig,
    path: PathConfig,
    stats: LatticeStats,
    rng: RngState,
    tensors: Vec<TensorShape>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FlowModel,
    pub rng: RngState,
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let named = ck.model.params.named();
    let header = Header {
        net: ck.model.net,
        path: ck.model.path,
        stats: ck.model.stats,
        rng: ck.rng,
        tensors: named.iter().map(|(n, m)| TensorShape { name: n.clone(), rows: m.rows, cols: m.cols }).collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(24 + json.len() + 8 * ck.model.params.n_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, m) in named {
        for x in &m.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| CheckpointError::Corrupt(format!("truncated {what}")))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut pos = 0;
    if take(bytes, &mut pos, MAGIC.len(), "magic")? != MAGIC {
        return Err(CheckpointError::Corrupt("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let header_len = u64::from_le_bytes(take(bytes, &mut pos, 8, "header length")?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len).map_err(|_| CheckpointError::Corrupt("header length overflows".into()))?;
    let header: Header = serde_json::from_slice(take(bytes, &mut pos, header_len, "header")?)
        .map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    header.net.validate().map_err(|e| CheckpointError::Corrupt(e.to_string()))?;

    let mut params = init_params(&header.net, 0);
    let expected: Vec<TensorShape> =
        params.named().iter().map(|(n, m)| TensorShape { name: n.clone(), rows: m.rows, cols: m.cols }).collect();
    if expected != header.tensors {
        return Err(CheckpointError::Corrupt("tensor shapes disagree with the network configuration".into()));
    }
    for m in params.tensors_mut() {
        let raw = take(bytes, &mut pos, 8 * m.data.len(), "tensor data")?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        *m = Matrix::from_vec(m.rows, m.cols, data);
    }
    if pos != bytes.len() {
        return Err(CheckpointError::Corrupt(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Checkpoint { model: FlowModel { net: header.net, path: header.path, stats: header.stats, params }, rng: header.rng })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    crate::manifest::write_atomic(path, &encode(ck))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&fs::read(path)?)
}
