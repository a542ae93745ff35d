use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Encoder, GlobalDiscriminator, LocalDiscriminator, PriorDiscriminator, ScoreNetwork};
use crate::nn::{Float, Param, Parameterized};
use crate::rng::{stream, substream};

/// Default embedding size.
pub const DEFAULT_EMBED_DIM: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Encoder,
    GlobalDiscriminator,
    LocalDiscriminator,
    PriorDiscriminator,
    ScoreNetwork,
}

impl Network {
    pub const ALL: [Network; 5] = [
        Network::Encoder,
        Network::GlobalDiscriminator,
        Network::LocalDiscriminator,
        Network::PriorDiscriminator,
        Network::ScoreNetwork,
    ];

    /// Everything except the score network.
    pub const STAGE1: [Network; 4] = [
        Network::Encoder,
        Network::GlobalDiscriminator,
        Network::LocalDiscriminator,
        Network::PriorDiscriminator,
    ];
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleState {
    pub encoder_trained: bool,
    pub sin_trained: bool,
    /// Decision threshold on raw scores, chosen on validation data.
    pub threshold: Option<f64>,
}

/// All trainable state of the two-stage detector.
#[derive(Clone, Debug)]
pub struct ModelBundle<T> {
    pub embed_dim: usize,
    pub encoder: Encoder<T>,
    pub global: GlobalDiscriminator<T>,
    pub local: LocalDiscriminator<T>,
    pub prior: PriorDiscriminator<T>,
    pub sin: ScoreNetwork<T>,
    pub state: BundleState,
}

impl<T: Float> ModelBundle<T> {
    pub fn new(embed_dim: usize, seed: u64) -> Self {
        Self {
            embed_dim,
            encoder: Encoder::new(embed_dim, &mut substream(seed, stream::ENCODER)),
            global: GlobalDiscriminator::new(embed_dim, &mut substream(seed, stream::GLOBAL_DISC)),
            local: LocalDiscriminator::new(embed_dim, &mut substream(seed, stream::LOCAL_DISC)),
            prior: PriorDiscriminator::new(embed_dim, &mut substream(seed, stream::PRIOR_DISC)),
            sin: ScoreNetwork::new(embed_dim, &mut substream(seed, stream::SIN)),
            state: BundleState::default(),
        }
    }

    pub fn reset_score_network(&mut self, seed: u64) {
        self.sin = ScoreNetwork::new(self.embed_dim, &mut substream(seed, stream::SIN));
        self.state.sin_trained = false;
        self.state.threshold = None;
    }

    pub fn network(&self, which: Network) -> Vec<&Param<T>> {
        match which {
            Network::Encoder => self.encoder.params(),
            Network::GlobalDiscriminator => self.global.params(),
            Network::LocalDiscriminator => self.local.params(),
            Network::PriorDiscriminator => self.prior.params(),
            Network::ScoreNetwork => self.sin.params(),
        }
    }

    pub fn network_mut(&mut self, which: Network) -> Vec<&mut Param<T>> {
        match which {
            Network::Encoder => self.encoder.params_mut(),
            Network::GlobalDiscriminator => self.global.params_mut(),
            Network::LocalDiscriminator => self.local.params_mut(),
            Network::PriorDiscriminator => self.prior.params_mut(),
            Network::ScoreNetwork => self.sin.params_mut(),
        }
    }

    /// SHA-256 over the names, shapes and values of the selected networks.
    pub fn digest(&self, networks: &[Network]) -> String {
        let mut h = Sha256::new();
        for &net in networks {
            for p in self.network(net) {
                h.update(p.name.as_bytes());
                for &d in &p.shape {
                    h.update((d as u64).to_le_bytes());
                }
                for v in &p.value {
                    h.update(v.as_f64().to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }

    pub fn zero_grad(&mut self) {
        for net in Network::ALL {
            self.network_mut(net).into_iter().for_each(Param::zero_grad);
        }
    }
}

impl<T: Float> Parameterized<T> for ModelBundle<T> {
    fn params(&self) -> Vec<&Param<T>> {
        Network::ALL.iter().flat_map(|&n| self.network(n)).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let Self { encoder, global, local, prior, sin, .. } = self;
        let mut out = encoder.params_mut();
        out.extend(global.params_mut());
        out.extend(local.params_mut());
        out.extend(prior.params_mut());
        out.extend(sin.params_mut());
        out
    }
}
