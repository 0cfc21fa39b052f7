//! The `LCKP` checkpoint format.
//!
//! ```text
//! offset  size       field
//! 0       4          magic "LCKP"
//! 4       4          u32 LE version (= 1)
//! 8       4          u32 LE byte length H of the JSON header
//! 12      H          UTF-8 JSON header (CheckpointHeader)
//! 12+H    8 * P      f64 LE parameters in canonical layer order
//! ```
//!
//! `P` is `header.param_count`, which must equal the count implied by
//! `header.denoiser`. See `diffusion::denoiser` for the canonical order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffusion::{DenoiserConfig, DenoiserParams, ParamTensor, ScheduleConfig};
use crate::error::{Error, Result};
use crate::numerics::Cursor;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub attribute: String,
    pub schedule: ScheduleConfig,
    /// Mean raw direction m_a of the training dataset.
    pub mean_direction: Vec<f64>,
    /// Mean norm of the centered raw directions; maps unit samples back to raw scale.
    pub centered_norm_mean: f64,
    pub train_steps: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointHeader {
    denoiser: DenoiserConfig,
    param_count: usize,
    layout: Vec<ParamTensor>,
    meta: CheckpointMeta,
}

pub fn encode_checkpoint(params: &DenoiserParams, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    if meta.mean_direction.len() != params.config().input_dim {
        return Err(Error::dims(
            "checkpoint mean direction",
            params.config().input_dim,
            meta.mean_direction.len(),
        ));
    }
    let header = CheckpointHeader {
        denoiser: *params.config(),
        param_count: params.len(),
        layout: params.config().layout(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len())
        .map_err(|_| Error::InvalidParameter("checkpoint header too large".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * params.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for v in params.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(DenoiserParams, CheckpointMeta)> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.magic()?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = cur.u32("header length")? as usize;
    let json = cur.take(len, "json header")?;
    let header: CheckpointHeader = serde_json::from_slice(json)?;
    header.denoiser.validate()?;
    let expected = header.denoiser.param_count();
    if header.param_count != expected {
        return Err(Error::ShapeMismatch(format!(
            "header declares {} parameters but config {:?} implies {expected}",
            header.param_count, header.denoiser
        )));
    }
    if header.layout != header.denoiser.layout() {
        return Err(Error::ShapeMismatch(
            "header layout does not match the denoiser config".into(),
        ));
    }
    if header.meta.mean_direction.len() != header.denoiser.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "mean direction has {} entries, input_dim is {}",
            header.meta.mean_direction.len(),
            header.denoiser.input_dim
        )));
    }
    let data = cur.f64s(header.param_count)?;
    cur.finish()?;
    let params = DenoiserParams::from_flat(header.denoiser, data)?;
    Ok((params, header.meta))
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &DenoiserParams, meta: &CheckpointMeta) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(params, meta)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(DenoiserParams, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
