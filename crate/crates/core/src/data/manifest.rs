//! On-disk corpus: 8-bit PNG frames under `normal/` and `abnormal/` plus a
//! JSON manifest listing every frame with its patient, label and blur score.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::folder::decode_image;
use super::preprocess::image_blur_score;
use super::{Image, Label, LabeledFrame, SynthConfig};
use crate::{Error, Result};

pub const CORPUS_FORMAT: &str = "fsad-corpus/1";
pub const MANIFEST_FILE: &str = "corpus.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest directory.
    pub path: String,
    pub patient_id: u32,
    pub label: Label,
    pub blur_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    #[serde(default)]
    pub generator: Option<SynthConfig>,
    pub blur_threshold: f64,
    /// Frames removed by the blur filter before writing.
    pub dropped_blurred: usize,
    pub fingerprint: String,
    pub frames: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// SHA-256 over ids, patients, labels and 8-bit pixel values, in order.
pub fn corpus_fingerprint(frames: &[LabeledFrame]) -> String {
    let mut h = Sha256::new();
    for f in frames {
        h.update(f.id.as_bytes());
        h.update([0]);
        h.update(f.patient_id.to_le_bytes());
        h.update(f.label.as_str().as_bytes());
        h.update((f.pixels.height() as u64).to_le_bytes());
        h.update((f.pixels.width() as u64).to_le_bytes());
        h.update(to_bytes(&f.pixels));
    }
    hex::encode(h.finalize())
}

fn to_bytes(img: &Image) -> Vec<u8> {
    img.data().iter().map(|&v| (v * 255.0).round() as u8).collect()
}

fn write_png(img: &Image, path: &Path) -> Result<()> {
    let (h, w) = (img.height(), img.width());
    let plane = h * w;
    let d = img.data();
    let buf = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let px = |c: usize| (d[c * plane + i] * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    });
    buf.save(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

/// Write frames as PNGs and return the manifest (also saved as `corpus.json`).
pub fn write_corpus(
    frames: &[LabeledFrame],
    dir: &Path,
    generator: Option<SynthConfig>,
    blur_threshold: f64,
    dropped_blurred: usize,
) -> Result<CorpusManifest> {
    let mut entries = Vec::with_capacity(frames.len());
    for label in [Label::Normal, Label::Abnormal] {
        let sub = dir.join(label.as_str());
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    }
    for f in frames {
        let rel = format!("{}/{}.png", f.label.as_str(), f.id.replace('/', "_"));
        write_png(&f.pixels, &dir.join(&rel))?;
        entries.push(ManifestEntry {
            id: f.id.clone(),
            path: rel,
            patient_id: f.patient_id,
            label: f.label,
            blur_score: image_blur_score(&f.pixels),
        });
    }
    let manifest = CorpusManifest {
        format: CORPUS_FORMAT.into(),
        generator,
        blur_threshold,
        dropped_blurred,
        fingerprint: corpus_fingerprint(frames),
        frames: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Accepts either the manifest file or the directory holding it.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let path = manifest_path(path);
    if !path.is_file() {
        return Err(Error::MissingInput(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    if manifest.format != CORPUS_FORMAT {
        return Err(Error::config(format!("unsupported corpus format {:?}", manifest.format)));
    }
    Ok(manifest)
}

/// Load all frames listed in a manifest and verify the fingerprint.
pub fn read_corpus(path: &Path) -> Result<(CorpusManifest, Vec<LabeledFrame>)> {
    let manifest = read_manifest(path)?;
    let mpath = manifest_path(path);
    let root = mpath.parent().unwrap_or(Path::new("."));
    let mut frames = Vec::with_capacity(manifest.len());
    for e in &manifest.frames {
        let file = root.join(&e.path);
        if !file.is_file() {
            return Err(Error::MissingInput(file));
        }
        frames.push(LabeledFrame { id: e.id.clone(), pixels: decode_image(&file)?, patient_id: e.patient_id, label: e.label });
    }
    let fp = corpus_fingerprint(&frames);
    if fp != manifest.fingerprint {
        return Err(Error::contract(format!(
            "corpus fingerprint mismatch: manifest {}, files {fp}",
            manifest.fingerprint
        )));
    }
    Ok((manifest, frames))
}
