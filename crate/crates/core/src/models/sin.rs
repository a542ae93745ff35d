use rand::Rng;

use crate::nn::{leaky_gain, BatchNorm, Dense, Float, LeakyRelu, Mode, Param, Parameterized, Tensor};
use crate::{Error, Result};

pub const SIN_HIDDEN: [usize; 2] = [128, 32];

/// Score-inference network: `Z -> 128 -> 32 -> 1` with batch norm and leaky
/// rectifiers on the hidden layers and a linear readout giving the raw
/// anomaly score.
#[derive(Clone, Debug)]
pub struct ScoreNetwork<T> {
    fc1: Dense<T>,
    bn1: BatchNorm<T>,
    act1: LeakyRelu,
    fc2: Dense<T>,
    bn2: BatchNorm<T>,
    act2: LeakyRelu,
    readout: Dense<T>,
    embed_dim: usize,
}

impl<T: Float> ScoreNetwork<T> {
    pub fn new<R: Rng>(embed_dim: usize, rng: &mut R) -> Self {
        let [h1, h2] = SIN_HIDDEN;
        Self {
            fc1: Dense::new("sin.fc1", embed_dim, h1, leaky_gain(), rng),
            bn1: BatchNorm::new("sin.bn1", h1),
            act1: LeakyRelu::default(),
            fc2: Dense::new("sin.fc2", h1, h2, leaky_gain(), rng),
            bn2: BatchNorm::new("sin.bn2", h2),
            act2: LeakyRelu::default(),
            readout: Dense::new("sin.readout", h2, 1, 1.0, rng),
            embed_dim,
        }
    }

    pub fn zero_readout(&mut self) {
        self.readout.weight.value.iter_mut().for_each(|w| *w = T::zero());
        self.readout.bias.value.iter_mut().for_each(|w| *w = T::zero());
    }

    /// Raw scores for each column of `embeddings` (`[Z, M]`).
    pub fn score(&mut self, embeddings: &Tensor<T>, mode: Mode) -> Result<Vec<T>> {
        if embeddings.shape().len() != 2 || embeddings.dim(0) != self.embed_dim {
            return Err(Error::shape(format!(
                "score network expects [{}, M], got {:?}",
                self.embed_dim,
                embeddings.shape()
            )));
        }
        let h = self.act1.forward(&self.bn1.forward(&self.fc1.forward(embeddings), mode));
        let h = self.act2.forward(&self.bn2.forward(&self.fc2.forward(&h), mode));
        Ok(self.readout.forward(&h).into_data())
    }

    pub fn backward(&mut self, d_scores: &[T]) -> Tensor<T> {
        let d = self.readout.backward(&Tensor::from_vec(&[1, d_scores.len()], d_scores.to_vec()));
        let d = self.fc2.backward(&self.bn2.backward(&self.act2.backward(&d)));
        self.fc1.backward(&self.bn1.backward(&self.act1.backward(&d)))
    }
}

impl<T: Float> Parameterized<T> for ScoreNetwork<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.fc1.params();
        out.extend(self.bn1.params());
        out.extend(self.fc2.params());
        out.extend(self.bn2.params());
        out.extend(self.readout.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.fc1.params_mut();
        out.extend(self.bn1.params_mut());
        out.extend(self.fc2.params_mut());
        out.extend(self.bn2.params_mut());
        out.extend(self.readout.params_mut());
        out
    }
}
