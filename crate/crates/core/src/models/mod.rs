//! Network definitions: the convolutional encoder, the global, local and
//! prior discriminators, and the score-inference network, plus the bundle
//! that owns them and its on-disk checkpoint format.

mod bundle;
pub mod checkpoint;
mod discriminators;
mod encoder;
mod sin;

pub use bundle::{BundleState, ModelBundle, Network, DEFAULT_EMBED_DIM};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use discriminators::{
    GlobalDiscriminator, LocalDiscriminator, PairGrads, PairScores, PriorDiscriminator, GLOBAL_FILTERS,
    LOCAL_FILTERS, PRIOR_UNITS, PROB_EPS,
};
pub use encoder::{
    Encoded, Encoder, ENCODER_FILTERS, INPUT_CHANNELS, INPUT_SIZE, LOCAL_CHANNELS, LOCAL_REGIONS, LOCAL_SIDE,
};
pub use sin::{ScoreNetwork, SIN_HIDDEN};
pub(crate) use discriminators::sigmoid;

use crate::nn::{Float, Mode, Tensor};
use crate::Result;

/// Embed a batch of images (`[3, N, 64, 64]`).
pub fn encode<T: Float>(encoder: &mut Encoder<T>, images: &Tensor<T>, mode: Mode) -> Result<Encoded<T>> {
    encoder.encode(images, mode)
}

/// Raw anomaly score of a single embedding.
pub fn sin_score<T: Float>(sin: &mut ScoreNetwork<T>, embedding: &[T]) -> Result<T> {
    let z = Tensor::from_vec(&[embedding.len(), 1], embedding.to_vec());
    Ok(sin.score(&z, Mode::Eval)?[0])
}

/// Prior-discriminator probability of a single vector.
pub fn discriminate_prior<T: Float>(prior: &mut PriorDiscriminator<T>, vector: &[T]) -> Result<T> {
    let v = Tensor::from_vec(&[vector.len(), 1], vector.to_vec());
    Ok(prior.probability(&v)?[0])
}
