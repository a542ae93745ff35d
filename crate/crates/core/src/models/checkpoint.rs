//! Checkpoint files: a JSON manifest describing every tensor (name, shape,
//! offset) and a sibling `.bin` blob of little-endian `f32` values in
//! manifest order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BundleState, ModelBundle};
use crate::nn::Parameterized;
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "fsad-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in elements from the start of the blob.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub dtype: String,
    pub embed_dim: usize,
    pub config_hash: String,
    pub state: BundleState,
    pub blob: String,
    pub blob_sha256: String,
    pub tensors: Vec<TensorEntry>,
}

/// Blob path belonging to a manifest path (`x.json` -> `x.bin`).
pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save_checkpoint(bundle: &ModelBundle<f32>, config_hash: &str, manifest_path: &Path) -> Result<CheckpointManifest> {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for p in bundle.params() {
        for v in &p.value {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        tensors.push(TensorEntry { name: p.name.clone(), shape: p.shape.clone(), offset, len: p.len() });
        offset += p.len();
    }
    let blob_file = blob_path(manifest_path);
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        dtype: "f32".to_string(),
        embed_dim: bundle.embed_dim,
        config_hash: config_hash.to_string(),
        state: bundle.state.clone(),
        blob: blob_file.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        blob_sha256: hex::encode(Sha256::digest(&blob)),
        tensors,
    };
    if let Some(parent) = manifest_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&blob_file, &blob).map_err(|e| Error::io(&blob_file, e))?;
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, text + "\n").map_err(|e| Error::io(manifest_path, e))?;
    Ok(manifest)
}

pub fn load_checkpoint(manifest_path: &Path) -> Result<(ModelBundle<f32>, CheckpointManifest)> {
    if !manifest_path.exists() {
        return Err(Error::MissingInput(manifest_path.to_path_buf()));
    }
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.dtype != "f32" {
        return Err(Error::contract(format!(
            "unsupported checkpoint {} / {}",
            manifest.format, manifest.dtype
        )));
    }
    let blob_file = manifest_path.with_file_name(&manifest.blob);
    if !blob_file.exists() {
        return Err(Error::MissingInput(blob_file));
    }
    let bytes = fs::read(&blob_file).map_err(|e| Error::io(&blob_file, e))?;
    if hex::encode(Sha256::digest(&bytes)) != manifest.blob_sha256 {
        return Err(Error::contract(format!("{} does not match its manifest digest", blob_file.display())));
    }
    let values: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();

    let mut bundle = ModelBundle::<f32>::new(manifest.embed_dim, 0);
    {
        let params = bundle.params_mut();
        if params.len() != manifest.tensors.len() {
            return Err(Error::contract(format!(
                "checkpoint lists {} tensors, model has {}",
                manifest.tensors.len(),
                params.len()
            )));
        }
        for (p, entry) in params.into_iter().zip(&manifest.tensors) {
            if p.name != entry.name || p.shape != entry.shape || entry.offset + entry.len > values.len() {
                return Err(Error::contract(format!("checkpoint tensor {} does not fit the model", entry.name)));
            }
            p.value.copy_from_slice(&values[entry.offset..entry.offset + entry.len]);
        }
    }
    bundle.state = manifest.state.clone();
    Ok((bundle, manifest))
}
