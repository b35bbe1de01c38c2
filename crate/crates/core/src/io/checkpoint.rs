//! Binary checkpoint of the base embeddings.
//!
//! Layout (little-endian):
//!
//! ```text
//! 0      8 bytes   magic "SAGCNCK1"
//! 8      u32       M (users)
//! 12     u32       N (items)
//! 16     u32       d
//! 20     f64 * M*d user rows, row-major
//! ...    f64 * N*d item rows, row-major
//! end-8  u64       config hash
//! ```
//!
//! The full run configuration is written next to it as `<path>.config`.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Result, SagcnError};
use crate::propagation::EmbeddingTable;

pub const MAGIC: &[u8; 8] = b"SAGCNCK1";
const HEADER_LEN: usize = 8 + 12;

pub fn expected_len(num_users: usize, num_items: usize, dim: usize) -> usize {
    HEADER_LEN + 8 * dim * (num_users + num_items) + 8
}

pub fn encode(table: &EmbeddingTable, config_hash: u64) -> Result<Vec<u8>> {
    let dims = [table.num_users(), table.num_items(), table.dim()];
    let mut buf = Vec::with_capacity(expected_len(dims[0], dims[1], dims[2]));
    buf.extend_from_slice(MAGIC);
    for n in dims {
        let n = u32::try_from(n).map_err(|_| SagcnError::Checkpoint(format!("dimension {n} exceeds u32")))?;
        buf.extend_from_slice(&n.to_le_bytes());
    }
    // joint layout is already users then items, row-major
    for x in table.joint().iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf.extend_from_slice(&config_hash.to_le_bytes());
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<(EmbeddingTable, u64)> {
    if bytes.len() < HEADER_LEN + 8 || &bytes[..8] != MAGIC {
        return Err(SagcnError::Checkpoint("missing SAGCNCK1 header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (m, n, d) = (word(8), word(12), word(16));
    let want = expected_len(m, n, d);
    if bytes.len() != want {
        return Err(SagcnError::Checkpoint(format!(
            "expected {want} bytes for {m}x{n}x{d}, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[HEADER_LEN..want - 8];
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let data = Array2::from_shape_vec((m + n, d), values).map_err(|e| SagcnError::Checkpoint(e.to_string()))?;
    let hash = u64::from_le_bytes(bytes[want - 8..].try_into().expect("8 bytes"));
    Ok((EmbeddingTable::from_joint(m, data)?, hash))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".config");
    PathBuf::from(s)
}

pub fn save(path: &Path, table: &EmbeddingTable, config_hash: u64, config_text: &str) -> Result<()> {
    super::write_atomic(path, &encode(table, config_hash)?)?;
    super::write_atomic(&sidecar_path(path), config_text.as_bytes())
}

pub fn load(path: &Path) -> Result<(EmbeddingTable, u64)> {
    let bytes = std::fs::read(path)
        .map_err(|e| SagcnError::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}
