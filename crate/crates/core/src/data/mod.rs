//! Frames, corpora, preprocessing and patient-wise splitting.

mod folder;
mod frame;
mod manifest;
mod preprocess;
mod split;
mod synth;

pub use folder::{
    decode_image, default_label_map, load_image_folder, load_image_folder_with, parse_patient_id, FolderLoad,
    FolderOptions, RejectedFile,
};
pub use frame::{batch_tensor, FrameSet, Image, Label, LabeledFrame, Partition};
pub use manifest::{
    corpus_fingerprint, manifest_path, read_corpus, read_manifest, write_corpus, CorpusManifest, ManifestEntry,
    CORPUS_FORMAT, MANIFEST_FILE,
};
pub use preprocess::{
    blur_score, filter_blurred, image_blur_score, preprocess, quantize_u8, resize_bilinear, DEFAULT_BLUR_THRESHOLD,
    MIN_INPUT_SIZE, TARGET_SIZE,
};
pub use split::{sample_abnormal_subset, split_patientwise, CorpusSplit, SplitPlan};
pub use synth::{
    corpus_recipes, generate_synthetic_corpus, render, FrameRecipe, Lesion, PatientStyle, SynthConfig, FRAME_SIZE,
    MAX_LESION_RADIUS, MIN_LESION_RADIUS,
};
