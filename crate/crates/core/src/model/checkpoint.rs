//! Checkpoints: a JSON header next to a little-endian f64 blob of the flat parameter vector.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HsdContext, HsdModel, ModelConfig, ModelDims, TensorSpec};
use crate::{Error, Real, Result};

pub const CHECKPOINT_FORMAT: &str = "hsd-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format: String,
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub complex_hash: String,
    /// File name of the parameter blob, relative to the header.
    pub blob: String,
    pub param_count: usize,
    /// Matrices are stored column-major.
    pub manifest: Vec<TensorSpec>,
}

/// Writes `<path>` (JSON) and `<path>.bin`; returns the blob path.
pub fn save_checkpoint<T: Real>(model: &HsdModel<T>, path: &Path) -> Result<PathBuf> {
    let blob_path = path.with_extension("bin");
    let blob_name = blob_path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad checkpoint path {}", path.display())))?
        .to_string();
    let meta = CheckpointMeta {
        format: CHECKPOINT_FORMAT.into(),
        config: model.config.clone(),
        dims: model.dims(),
        complex_hash: model.context.complex_hash.clone(),
        blob: blob_name,
        param_count: model.param_count(),
        manifest: model.manifest().to_vec(),
    };
    let mut bytes = Vec::with_capacity(8 * model.params.len());
    for v in &model.params {
        bytes.extend_from_slice(&v.to_f64().to_le_bytes());
    }
    fs::write(&blob_path, bytes)?;
    fs::write(path, serde_json::to_string_pretty(&meta)?)?;
    Ok(blob_path)
}

/// Reads a header and its blob and attaches them to `context`.
///
/// The context may live on a different complex than the one trained on, as long as the
/// parameter shapes agree.
pub fn load_checkpoint<T: Real>(path: &Path, context: HsdContext<T>) -> Result<(HsdModel<T>, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(path)?)?;
    if meta.format != CHECKPOINT_FORMAT {
        return Err(Error::Parse(format!("unsupported checkpoint format '{}'", meta.format)));
    }
    let blob = fs::read(path.with_file_name(&meta.blob))?;
    if blob.len() != 8 * meta.param_count {
        return Err(Error::ShapeMismatch(format!(
            "blob has {} bytes, header promises {} parameters",
            blob.len(),
            meta.param_count
        )));
    }
    let mut model = HsdModel::zeroed(context, meta.config.clone())?;
    if model.manifest() != meta.manifest.as_slice() {
        return Err(Error::ShapeMismatch("checkpoint manifest does not match the model layout".into()));
    }
    for (dst, chunk) in model.params.iter_mut().zip(blob.chunks_exact(8)) {
        *dst = T::of(f64::from_le_bytes(chunk.try_into().expect("8-byte chunk")));
    }
    Ok((model, meta))
}
