use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::compute_auc;
use crate::data::{sample_abnormal_subset, CorpusSplit, Partition};
use crate::models::ModelBundle;
use crate::rng::mix;
use crate::training::{embed_frames, fit_score_network, score_embeddings, ScoreHead, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub k: usize,
    pub mean_auc: f64,
    /// Population standard deviation over repeats.
    pub std_auc: f64,
    pub aucs: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub repeats: usize,
    pub entries: Vec<SweepEntry>,
}

impl SweepResult {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, k: usize) -> Option<&SweepEntry> {
        self.entries.iter().find(|e| e.k == k)
    }
}

/// Seed for one (k, repeat) cell of a sweep.
pub fn sweep_seed(base: u64, k: usize, repeat: usize) -> u64 {
    mix(base, ((k as u64) << 20) | repeat as u64)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Test AUC against the number of abnormal training frames. The encoder in
/// `bundle` is shared by every cell; each (k, repeat) draws its own abnormal
/// subset and fits a fresh score network.
pub fn run_sweep(
    bundle: &ModelBundle<f32>,
    split: &CorpusSplit,
    k_values: &[usize],
    repeats: usize,
    cfg: &TrainConfig,
) -> Result<SweepResult> {
    if repeats == 0 {
        return Err(Error::config("sweep repeats must be at least 1"));
    }
    if !bundle.state.encoder_trained {
        return Err(Error::contract("the sweep needs a trained encoder"));
    }
    let pool = &split.train_abnormal;
    if let Some(&k) = k_values.iter().find(|&&k| k > pool.len()) {
        return Err(Error::config(format!("cannot sample {k} abnormal frames from a pool of {}", pool.len())));
    }
    let mut work = bundle.clone();
    let normal = embed_frames(&mut work, &split.train_normal)?;
    let pool_emb = embed_frames(&mut work, pool)?;
    let validation = embed_frames(&mut work, &split.validation)?;
    let test = embed_frames(&mut work, &split.test)?;
    let index: HashMap<&str, usize> = pool.frames.iter().enumerate().map(|(i, f)| (f.id.as_str(), i)).collect();

    let mut entries = Vec::with_capacity(k_values.len());
    for &k in k_values {
        let mut aucs = Vec::with_capacity(repeats);
        let mut seeds = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let seed = sweep_seed(cfg.rng_seed, k, r);
            let subset = sample_abnormal_subset(pool, k, seed)?;
            let idx: Vec<usize> = subset.frames.iter().map(|f| index[f.id.as_str()]).collect();
            let abnormal = pool_emb.select(&idx, Partition::TrainAbnormal);
            fit_score_network(&mut work, &normal, &abnormal, Some(&validation), ScoreHead::Deviation, cfg, seed)?;
            aucs.push(compute_auc(&score_embeddings(&mut work, &test)?)?);
            seeds.push(seed);
        }
        let (mean_auc, std_auc) = mean_std(&aucs);
        entries.push(SweepEntry { k, mean_auc, std_auc, aucs, seeds });
    }
    Ok(SweepResult { repeats, entries })
}
