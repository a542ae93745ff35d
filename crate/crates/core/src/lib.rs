//! Few-shot anomaly detection toolkit.
//!
//! A convolutional encoder is first trained on normal images only, by
//! maximizing global and local mutual-information lower bounds between
//! images and embeddings while adversarially matching the embedding
//! distribution to a Gaussian prior. A small score network is then fitted
//! on frozen embeddings of many normal and a handful of abnormal images
//! with a deviation loss, and its output is thresholded at inference.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
