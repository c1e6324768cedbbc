//! Checkpoint files: one JSON header line `{dims, seed, version}`, then the
//! parameters as little-endian IEEE-754 doubles.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Dims, PolicyParams};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("expected {expected} parameters, found {found} bytes of payload")]
    Length { expected: usize, found: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dims: Dims,
    seed: u64,
    version: u32,
}

pub fn write_checkpoint(params: &PolicyParams) -> Vec<u8> {
    let header = Header {
        dims: params.dims,
        seed: params.seed,
        version: CHECKPOINT_VERSION,
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    for v in &params.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<PolicyParams, CheckpointError> {
    let newline = bytes
        .iter()
        .position(|b| *b == b'\n')
        .ok_or_else(|| CheckpointError::Header("missing header line".into()))?;
    let header: Header =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| CheckpointError::Header(e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(header.version));
    }
    let payload = &bytes[newline + 1..];
    let expected = header.dims.param_count();
    if payload.len() != expected * 8 {
        return Err(CheckpointError::Length {
            expected,
            found: payload.len(),
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(PolicyParams {
        dims: header.dims,
        seed: header.seed,
        values,
    })
}

/// Writes to a sibling temp file, then renames over `path`.
pub fn save_checkpoint(params: &PolicyParams, path: &Path) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&write_checkpoint(params))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams, CheckpointError> {
    read_checkpoint(&fs::read(path)?)
}
