//! Two-stage training: the representation stage on normal frames, then the
//! score network on frozen embeddings of normal and a few abnormal frames.

mod config;
mod log;
mod stages;

pub use config::{DataConfig, Preset, SweepConfig, TrainConfig, PRESET_NAMES};
pub use log::{EncoderEpoch, LogEvent, LogRecord, ScoreEpoch, TrainingLog};
pub use stages::{
    embed_frames, fit_score_network, infer_score, score_embeddings, score_frames, train_ablation,
    train_encoder_stage, train_sin_stage, AblationVariant, EmbeddingSet, ScoreHead, StageData, EMBED_CHUNK,
};
