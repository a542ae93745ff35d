use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Provenance record written next to the artifacts of every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub source_revision: String,
    pub seed: u64,
    pub dataset_fingerprint: Option<String>,
    pub k_abnormal: Option<usize>,
    pub artifacts: Vec<Artifact>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

pub fn source_revision() -> String {
    let version = env!("CARGO_PKG_VERSION");
    let rev = Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string());
    match rev {
        Some(r) if !r.is_empty() => format!("{version}+{r}"),
        _ => version.to_string(),
    }
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64, started_unix: f64) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            source_revision: source_revision(),
            seed,
            dataset_fingerprint: None,
            k_abnormal: None,
            artifacts: Vec::new(),
            started_unix,
            finished_unix: started_unix,
        }
    }

    /// Hash `files` and write the manifest to `path`. Artifact paths are
    /// stored relative to the manifest's directory when possible.
    pub fn finish(mut self, files: &[PathBuf], path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(""));
        for f in files {
            let (sha256, bytes) = sha256_file(f)?;
            let rel = f.strip_prefix(base).unwrap_or(f);
            self.artifacts.push(Artifact { path: rel.to_string_lossy().replace('\\', "/"), sha256, bytes });
        }
        self.finished_unix = now_unix();
        let json = serde_json::to_string_pretty(&self)? + "\n";
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
        Ok(self)
    }
}
