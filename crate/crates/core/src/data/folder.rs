//! Loading labelled frames from an image folder.
//!
//! Layout: `<root>/<class dir>/<patient>_<anything>.<png|jpg|jpeg>`, where
//! the class directory maps to a label and the file name starts with the
//! integer patient id followed by an underscore.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Image, Label, LabeledFrame};
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct FolderOptions {
    pub label_map: BTreeMap<String, Label>,
    /// Keep one of every `stride` frames per (class, patient), in file-name order.
    pub stride: usize,
}

impl Default for FolderOptions {
    fn default() -> Self {
        Self { label_map: default_label_map(), stride: 1 }
    }
}

pub fn default_label_map() -> BTreeMap<String, Label> {
    BTreeMap::from([("normal".to_string(), Label::Normal), ("abnormal".to_string(), Label::Abnormal)])
}

#[derive(Clone, Debug, PartialEq)]
pub struct RejectedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct FolderLoad {
    pub frames: Vec<LabeledFrame>,
    /// Files that could not be decoded.
    pub rejected: Vec<RejectedFile>,
}

/// Leading integer before the first underscore of the file stem.
pub fn parse_patient_id(path: &Path) -> Result<u32> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    stem.split_once('_')
        .and_then(|(head, _)| head.parse().ok())
        .ok_or_else(|| Error::PatientId(path.to_path_buf()))
}

pub fn decode_image(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0f32; 3 * w * h];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px[c] as f32 / 255.0;
        }
    }
    Image::new(h, w, data)
}

pub fn load_image_folder(path: &Path, label_map: &BTreeMap<String, Label>) -> Result<FolderLoad> {
    load_image_folder_with(path, &FolderOptions { label_map: label_map.clone(), stride: 1 })
}

pub fn load_image_folder_with(path: &Path, options: &FolderOptions) -> Result<FolderLoad> {
    if !path.is_dir() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    if options.stride == 0 {
        return Err(Error::config("frame stride must be at least 1"));
    }
    let mut load = FolderLoad::default();
    for (dir_name, &label) in &options.label_map {
        let dir = path.join(dir_name);
        if !dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
        for file in files {
            let patient_id = parse_patient_id(&file)?;
            let count = seen.entry(patient_id).or_insert(0);
            let keep = *count % options.stride == 0;
            *count += 1;
            if !keep {
                continue;
            }
            match decode_image(&file) {
                Ok(pixels) => {
                    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                    load.frames.push(LabeledFrame { id: format!("{dir_name}/{stem}"), pixels, patient_id, label });
                }
                Err(e) => load.rejected.push(RejectedFile { path: file, reason: e.to_string() }),
            }
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patient_token_parsing() {
        assert_eq!(parse_patient_id(Path::new("a/12_frame.png")).unwrap(), 12);
        assert_eq!(parse_patient_id(Path::new("007_x_y.jpg")).unwrap(), 7);
        assert!(matches!(parse_patient_id(Path::new("frame.png")), Err(Error::PatientId(_))));
        assert!(parse_patient_id(Path::new("p3_frame.png")).is_err());
    }

    #[test]
    fn missing_root_is_missing_input() {
        let r = load_image_folder(Path::new("/definitely/not/here"), &default_label_map());
        assert!(matches!(r, Err(Error::MissingInput(_))));
    }
}
