use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{SplitPlan, SynthConfig, DEFAULT_BLUR_THRESHOLD};
use crate::models::DEFAULT_EMBED_DIM;
use crate::nn::AdamConfig;
use crate::objectives::{DeviationConfig, DimWeights, PriorSpec, DEFAULT_FOCAL_GAMMA};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Passes over the training normal frames in the representation stage.
    pub stage1_epochs: usize,
    /// Passes over the training normal frames in the score-network stage.
    pub stage2_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default)]
    pub weights: DimWeights,
    #[serde(default)]
    pub deviation: DeviationConfig,
    #[serde(default)]
    pub prior: PriorSpec,
    pub embed_dim: usize,
    pub rng_seed: u64,
    /// Number of training abnormal frames given to the score network.
    pub k_abnormal: usize,
    #[serde(default = "default_focal_gamma")]
    pub focal_gamma: f64,
    #[serde(default)]
    pub desk_scale: bool,
}

fn default_beta1() -> f64 {
    AdamConfig::with_learning_rate(1e-4).beta1
}

fn default_beta2() -> f64 {
    AdamConfig::with_learning_rate(1e-4).beta2
}

fn default_focal_gamma() -> f64 {
    DEFAULT_FOCAL_GAMMA
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stage1_epochs: 6000,
            stage2_epochs: 1000,
            batch_size: 64,
            learning_rate: 1e-4,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            weights: DimWeights::default(),
            deviation: DeviationConfig::default(),
            prior: PriorSpec::default(),
            embed_dim: DEFAULT_EMBED_DIM,
            rng_seed: 0,
            k_abnormal: 40,
            focal_gamma: DEFAULT_FOCAL_GAMMA,
            desk_scale: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config(format!("batch size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("moment coefficients must lie in [0, 1), got {b}")));
            }
        }
        if self.embed_dim == 0 {
            return Err(Error::config("embedding size must be positive"));
        }
        if !(self.focal_gamma >= 0.0) {
            return Err(Error::config("focal gamma must be >= 0"));
        }
        self.weights.validate()?;
        self.deviation.validate()?;
        self.prior.sampler(self.embed_dim)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("configs serialize")))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::with_learning_rate(self.learning_rate)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub synth: SynthConfig,
    #[serde(default = "default_blur_threshold")]
    pub blur_threshold: f64,
    pub split: SplitPlan,
    /// Seed of the patient shuffle, kept apart from the training seed so that
    /// reseeded runs see the same partitions.
    #[serde(default)]
    pub split_seed: u64,
}

fn default_blur_threshold() -> f64 {
    DEFAULT_BLUR_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_values: Vec<usize>,
    pub repeats: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { k_values: (1..=8).map(|i| i * 10).collect(), repeats: 3 }
    }
}

/// A complete, named run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub data: DataConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

const PAPER_JSON: &str = include_str!("../../../../configs/paper.json");
const DESK_JSON: &str = include_str!("../../../../configs/desk.json");
const SMOKE_JSON: &str = include_str!("../../../../configs/smoke.json");

pub const PRESET_NAMES: [&str; 3] = ["paper", "desk", "smoke"];

impl Preset {
    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "paper" => PAPER_JSON,
            "desk" => DESK_JSON,
            "smoke" => SMOKE_JSON,
            other => {
                return Err(Error::config(format!(
                    "unknown preset {other:?}, expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        Self::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Preset = serde_json::from_str(text).map_err(|e| Error::config(format!("bad preset: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synth.validate()?;
        if !(self.data.blur_threshold >= 0.0) {
            return Err(Error::config("blur threshold must be >= 0"));
        }
        if self.sweep.repeats == 0 {
            return Err(Error::config("sweep repeats must be at least 1"));
        }
        self.train.validate()
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("presets serialize");
        hex::encode(Sha256::digest(bytes))
    }
}
