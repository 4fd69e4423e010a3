//! Checkpoints are tensor containers whose metadata records the model kind,
//! the epoch, the validation loss, and the fingerprints binding the file to
//! its normalization statistics and frozen encoder.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{read_container, write_container};
use crate::error::{Error, Result};
use crate::nn::TensorMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: String,
    pub epoch: usize,
    pub val_mse: f64,
    pub stats_fingerprint: String,
    pub encoder_fingerprint: String,
    /// Echo of the run configuration the checkpoint was produced under.
    pub config: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, params: &TensorMap, meta: &CheckpointMeta) -> Result<()> {
    write_container(path, params, serde_json::to_value(meta)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(TensorMap, CheckpointMeta)> {
    let (tensors, meta) = read_container(path)?;
    let meta: CheckpointMeta = serde_json::from_value(meta)
        .map_err(|e| Error::Container(format!("{}: bad checkpoint metadata: {e}", path.display())))?;
    Ok((tensors, meta))
}

/// Copies `src` values into `dst`, requiring the exact same tensor names and
/// shapes on both sides.
pub fn apply_params(dst: &mut TensorMap, src: &TensorMap) -> Result<()> {
    if dst.len() != src.len() {
        return Err(Error::Container(format!(
            "parameter count mismatch: model has {}, checkpoint has {}",
            dst.len(),
            src.len()
        )));
    }
    let names: Vec<String> = dst.names().cloned().collect();
    for name in names {
        let loaded = src.try_get(&name).map_err(|_| {
            Error::Container(format!("checkpoint is missing tensor {name}"))
        })?;
        let target = dst.get_mut(&name);
        if target.shape() != loaded.shape() {
            return Err(Error::Container(format!(
                "tensor {name} shape {:?} does not match checkpoint {:?}",
                target.shape(),
                loaded.shape()
            )));
        }
        target.assign(loaded);
    }
    Ok(())
}

/// Rejects a checkpoint whose normalization statistics differ from the ones
/// the evaluation data was standardized with.
pub fn require_stats_match(meta: &CheckpointMeta, expected_fingerprint: &str) -> Result<()> {
    if meta.stats_fingerprint != expected_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: expected_fingerprint.to_string(),
            actual: meta.stats_fingerprint.clone(),
        });
    }
    Ok(())
}
