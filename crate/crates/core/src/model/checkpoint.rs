//! Checkpoint layout (little-endian):
//!
//! ```text
//! "USPCKPT1" | u32 version | u32 len, config JSON | u32 tensor count
//! per tensor: u32 name len, name | u32 rank | u32 dims… | f32 data…
//! u32 CRC-32 of every preceding byte
//! ```

use std::path::Path;

use super::config::ModelConfig;
use super::network::ParameterStore;
use crate::autodiff::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"USPCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a version-{CHECKPOINT_VERSION} checkpoint: {0}")]
    VersionMismatch(String),
    #[error("checkpoint checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint tensors disagree with its config: {0}")]
    ShapeMismatch(String),
    #[error("checkpoint config is invalid: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn checkpoint_bytes(config: &ModelConfig, params: &ParameterStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(params.num_elements() * 4 + 4096);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    let json = serde_json::to_vec(config).expect("config serializes");
    put_u32(&mut out, json.len() as u32);
    out.extend_from_slice(&json);
    put_u32(&mut out, params.len() as u32);
    for (name, t) in params.iter() {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.shape().len() as u32);
        for &d in t.shape() {
            put_u32(&mut out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ModelConfig, ParameterStore), CheckpointError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() + 4 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::VersionMismatch("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch(format!("file has version {version}")));
    }
    let payload_end = bytes.len().checked_sub(4).ok_or(CheckpointError::Truncated)?;
    let mut cur = Cursor {
        buf: &bytes[..payload_end],
        pos: 12,
    };
    let json_len = cur.u32()? as usize;
    let json = cur.take(json_len)?;
    let count = cur.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = cur.take(name_len)?.to_vec();
        let rank = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(cur.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = cur.take(n.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push((name, shape, data));
    }
    let stored = u32::from_le_bytes(bytes[payload_end..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..payload_end]);
    if cur.pos != payload_end || stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let config: ModelConfig = serde_json::from_slice(json).map_err(|e| CheckpointError::Config(e.to_string()))?;
    let mut params = ParameterStore::default();
    for (name, shape, data) in tensors {
        let name = String::from_utf8(name).map_err(|_| CheckpointError::ShapeMismatch("non-UTF-8 name".into()))?;
        let t = Tensor::new(shape, data).map_err(|e| CheckpointError::ShapeMismatch(format!("{name}: {e}")))?;
        params.insert(name, t);
    }
    params
        .check_shapes(&config)
        .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
    Ok((config, params))
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ParameterStore) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint_bytes(config, params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ParameterStore), CheckpointError> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
