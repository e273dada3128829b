//! Versioned binary checkpoint for a trained [`SiameseModel`].
//!
//! Layout: the magic `SPSMODEL`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header, then every parameter as a
//! little-endian `f64` in [`SiameseParams::slices`] order.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::embeddings::EmbeddingTable;
use super::model::{SiameseModel, SiameseParams, TrainingMetadata};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::util::atomic_write;

pub const MAGIC: &[u8; 8] = b"SPSMODEL";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    input_size: usize,
    hidden_size: usize,
    max_sequence_length: usize,
    parameter_count: usize,
    config: Option<TrainConfig>,
    metadata: TrainingMetadata,
}

pub fn checkpoint_bytes(model: &SiameseModel, config: Option<&TrainConfig>) -> Vec<u8> {
    let params = model.params();
    let header = Header {
        input_size: params.input_size(),
        hidden_size: params.hidden_size(),
        max_sequence_length: model.max_sequence_length(),
        parameter_count: params.parameter_count(),
        config: config.cloned(),
        metadata: model.metadata().clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + 8 * params.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for s in params.slices() {
        for x in s {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, model: &SiameseModel, config: Option<&TrainConfig>) -> Result<()> {
    atomic_write(path, &checkpoint_bytes(model, config))
}

/// Rebuilds a model from checkpoint bytes. The embedding table must be the
/// one the model was trained with.
pub fn model_from_bytes(
    bytes: &[u8],
    embeddings: Arc<EmbeddingTable>,
    origin: &Path,
) -> Result<(SiameseModel, Option<TrainConfig>)> {
    let bad = |m: &str| Error::artifact(origin, m);
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a model checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..header_end])?;
    if header.metadata.embedding_hash != embeddings.hash() {
        return Err(bad("embedding table differs from the one used in training"));
    }
    let mut params = SiameseParams::zeros(header.input_size, header.hidden_size);
    if params.parameter_count() != header.parameter_count {
        return Err(bad("parameter count does not match declared shapes"));
    }
    let body = &bytes[header_end..];
    if body.len() != 8 * header.parameter_count {
        return Err(bad("parameter block has the wrong length"));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    params.set_flat(&flat);
    let model = SiameseModel::new(embeddings, params, header.max_sequence_length, header.metadata)?;
    Ok((model, header.config))
}

pub fn load_checkpoint(path: &Path, embeddings: Arc<EmbeddingTable>) -> Result<(SiameseModel, Option<TrainConfig>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes, embeddings, path)
}
