use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EncoderEpoch, LogEvent, ScoreEpoch, TrainConfig, TrainingLog};
use crate::data::{batch_tensor, FrameSet, Image, Label, LabeledFrame, Partition};
use crate::evaluation::{compute_auc, select_threshold, ScoredSet};
use crate::models::{ModelBundle, Network};
use crate::nn::{Adam, Mode, Parameterized, Tensor};
use crate::objectives::{
    baseline_loss_with_grad, deviation_loss_with_grad, dim_gradients, BaselineKind, DimTerms, GradientRoute,
};
use crate::rng::{stream, substream};
use crate::{Error, Result};

/// Images embedded per forward pass when no gradients are needed.
pub const EMBED_CHUNK: usize = 64;

/// Loss used to fit the score network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreHead {
    Deviation,
    CrossEntropy,
    Focal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationVariant {
    CrossEntropyHead,
    FocalHead,
    NoRepresentationLearning,
}

/// Frozen-encoder embeddings of a frame set, one column per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub partition: Partition,
    pub ids: Vec<String>,
    pub patients: Vec<u32>,
    pub labels: Vec<Label>,
    pub embeddings: Tensor<f32>,
}

impl EmbeddingSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn columns(&self, idx: &[usize]) -> Tensor<f32> {
        let (z, n) = (self.embeddings.dim(0), self.embeddings.dim(1));
        let src = self.embeddings.data();
        let mut out = vec![0f32; z * idx.len()];
        for r in 0..z {
            for (j, &i) in idx.iter().enumerate() {
                out[r * idx.len() + j] = src[r * n + i];
            }
        }
        Tensor::from_vec(&[z, idx.len()], out)
    }

    /// Subset of the columns at `idx`, in that order.
    pub fn select(&self, idx: &[usize], partition: Partition) -> Self {
        Self {
            partition,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            patients: idx.iter().map(|&i| self.patients[i]).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            embeddings: self.columns(idx),
        }
    }
}

fn frame_refs(frames: &[LabeledFrame]) -> Vec<&Image> {
    frames.iter().map(|f| &f.pixels).collect()
}

/// Embed frames with the encoder in evaluation mode.
pub fn embed_frames(bundle: &mut ModelBundle<f32>, set: &FrameSet) -> Result<EmbeddingSet> {
    let z = bundle.embed_dim;
    let n = set.len();
    let mut data = vec![0f32; z * n];
    for (c, chunk) in set.frames.chunks(EMBED_CHUNK).enumerate() {
        let x = batch_tensor::<f32>(&frame_refs(chunk))?;
        let emb = bundle.encoder.encode(&x, Mode::Eval)?.embedding;
        let m = chunk.len();
        for r in 0..z {
            let dst = r * n + c * EMBED_CHUNK;
            data[dst..dst + m].copy_from_slice(&emb.data()[r * m..(r + 1) * m]);
        }
    }
    Ok(EmbeddingSet {
        partition: set.partition,
        ids: set.frames.iter().map(|f| f.id.clone()).collect(),
        patients: set.frames.iter().map(|f| f.patient_id).collect(),
        labels: set.frames.iter().map(|f| f.label).collect(),
        embeddings: Tensor::from_vec(&[z, n], data),
    })
}

fn require_labels(labels: &[Label], expected: Label, what: &str) -> Result<()> {
    match labels.iter().position(|&l| l != expected) {
        Some(i) => Err(Error::contract(format!(
            "{what} must contain only {} frames, item {i} is {}",
            expected.as_str(),
            labels[i].as_str()
        ))),
        None => Ok(()),
    }
}

fn finite(terms: &DimTerms<f32>) -> bool {
    [terms.global, terms.local, terms.prior_value, terms.disc_loss, terms.enc_loss].iter().all(|v| v.is_finite())
}

/// Representation stage: a fresh bundle seeded from `cfg.rng_seed`, trained
/// on normal frames only. Each batch computes the encoder and discriminator
/// gradients in one pass, then applies one discriminator step followed by
/// one encoder step.
pub fn train_encoder_stage(train_normal: &FrameSet, cfg: &TrainConfig) -> Result<(ModelBundle<f32>, TrainingLog)> {
    cfg.validate()?;
    train_normal.require(&[Partition::TrainNormal], "representation training")?;
    let labels: Vec<Label> = train_normal.frames.iter().map(|f| f.label).collect();
    require_labels(&labels, Label::Normal, "representation training data")?;
    if train_normal.len() < 2 {
        return Err(Error::contract(format!(
            "representation training needs at least 2 normal frames, got {}",
            train_normal.len()
        )));
    }

    let mut bundle = ModelBundle::<f32>::new(cfg.embed_dim, cfg.rng_seed);
    let mut log = TrainingLog::new(cfg.rng_seed, cfg.hash());
    let sampler = cfg.prior.sampler(cfg.embed_dim)?;
    let mut shuffle_rng = substream(cfg.rng_seed, stream::STAGE1_SHUFFLE);
    let mut prior_rng = substream(cfg.rng_seed, stream::STAGE1_PRIOR);
    let route = GradientRoute::training(&cfg.weights);
    let mut enc_opt = Adam::new(cfg.adam());
    let mut disc_opt = Adam::new(cfg.adam());
    let start = Instant::now();
    let mut order: Vec<usize> = (0..train_normal.len()).collect();

    for epoch in 0..cfg.stage1_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0f64; 6];
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let imgs: Vec<&Image> = chunk.iter().map(|&i| &train_normal.frames[i].pixels).collect();
            let x = batch_tensor::<f32>(&imgs)?;
            let prior = sampler.sample::<f32, _>(chunk.len(), &mut prior_rng);
            let terms = dim_gradients(&mut bundle, &x, &prior, &route, Mode::Train)?;
            if !finite(&terms) {
                return Err(Error::contract(format!("non-finite representation loss in epoch {epoch}")));
            }
            {
                let ModelBundle { global, local, prior, .. } = &mut bundle;
                let mut disc = global.params_mut();
                disc.extend(local.params_mut());
                disc.extend(prior.params_mut());
                disc_opt.step(disc);
            }
            enc_opt.step(bundle.encoder.params_mut());
            let enc_loss = terms.combine(&cfg.weights).encoder_side;
            for (s, v) in sums.iter_mut().zip([
                enc_loss,
                terms.global,
                terms.local,
                terms.prior_value,
                terms.disc_loss,
                terms.enc_loss,
            ]) {
                *s += v as f64;
            }
            batches += 1;
        }
        let b = batches.max(1) as f64;
        log.push(
            LogEvent::Encoder(EncoderEpoch {
                epoch,
                encoder_loss: sums[0] / b,
                global_mi: sums[1] / b,
                local_mi: sums[2] / b,
                prior_value: sums[3] / b,
                prior_disc_loss: sums[4] / b,
                prior_enc_loss: sums[5] / b,
                batches,
            }),
            start.elapsed().as_secs_f64(),
        );
    }
    bundle.state.encoder_trained = true;
    Ok((bundle, log))
}

/// Score-network stage on frames: embeds them with the frozen encoder and
/// fits the score network with the deviation loss.
pub fn train_sin_stage(
    mut bundle: ModelBundle<f32>,
    train_normal: &FrameSet,
    train_abnormal: &FrameSet,
    validation: Option<&FrameSet>,
    cfg: &TrainConfig,
) -> Result<(ModelBundle<f32>, TrainingLog)> {
    if !bundle.state.encoder_trained {
        return Err(Error::contract("score-network training needs a trained encoder"));
    }
    let log = train_sin_frames(&mut bundle, train_normal, train_abnormal, validation, ScoreHead::Deviation, cfg)?;
    Ok((bundle, log))
}

fn train_sin_frames(
    bundle: &mut ModelBundle<f32>,
    train_normal: &FrameSet,
    train_abnormal: &FrameSet,
    validation: Option<&FrameSet>,
    head: ScoreHead,
    cfg: &TrainConfig,
) -> Result<TrainingLog> {
    if train_abnormal.is_empty() {
        return Err(Error::contract("score-network training needs at least one abnormal frame"));
    }
    train_normal.require(&[Partition::TrainNormal], "score-network training")?;
    train_abnormal.require(&[Partition::TrainAbnormal], "score-network training")?;
    if let Some(v) = validation {
        v.require(&[Partition::Validation], "model selection")?;
    }
    let normal = embed_frames(bundle, train_normal)?;
    let abnormal = embed_frames(bundle, train_abnormal)?;
    let val = validation.map(|v| embed_frames(bundle, v)).transpose()?;
    fit_score_network(bundle, &normal, &abnormal, val.as_ref(), head, cfg, cfg.rng_seed)
}

fn head_loss(head: ScoreHead, raw: &[f32], labels: &[Label], cfg: &TrainConfig) -> Result<(f32, Vec<f32>)> {
    match head {
        ScoreHead::Deviation => deviation_loss_with_grad(raw, labels, &cfg.deviation),
        ScoreHead::CrossEntropy => baseline_loss_with_grad(BaselineKind::CrossEntropy, raw, labels, cfg.focal_gamma),
        ScoreHead::Focal => baseline_loss_with_grad(BaselineKind::Focal, raw, labels, cfg.focal_gamma),
    }
}

fn sin_scores(bundle: &mut ModelBundle<f32>, set: &EmbeddingSet) -> Result<Vec<f64>> {
    if set.is_empty() {
        return Ok(Vec::new());
    }
    Ok(bundle.sin.score(&set.embeddings, Mode::Eval)?.into_iter().map(f64::from).collect())
}

/// Fit a freshly seeded score network on precomputed embeddings.
///
/// Each epoch walks the shuffled normals in chunks of half a batch and pairs
/// every chunk with as many abnormal embeddings drawn with replacement. The
/// network with the best validation AUC is kept, and the decision threshold
/// is set where validation balanced accuracy peaks. Every non-score-network
/// parameter is checked to be unchanged.
pub fn fit_score_network(
    bundle: &mut ModelBundle<f32>,
    normal: &EmbeddingSet,
    abnormal: &EmbeddingSet,
    validation: Option<&EmbeddingSet>,
    head: ScoreHead,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainingLog> {
    cfg.validate()?;
    if abnormal.is_empty() {
        return Err(Error::contract("score-network training needs at least one abnormal frame"));
    }
    if normal.is_empty() {
        return Err(Error::contract("score-network training needs normal frames"));
    }
    for (set, allowed) in [(normal, Partition::TrainNormal), (abnormal, Partition::TrainAbnormal)] {
        if set.partition != allowed {
            return Err(Error::contract(format!("score-network training cannot consume {:?} frames", set.partition)));
        }
    }
    require_labels(&normal.labels, Label::Normal, "normal training set")?;
    require_labels(&abnormal.labels, Label::Abnormal, "abnormal training set")?;
    if let Some(v) = validation {
        if v.partition != Partition::Validation {
            return Err(Error::contract(format!("model selection cannot consume {:?} frames", v.partition)));
        }
    }

    let frozen = bundle.digest(&Network::STAGE1);
    bundle.reset_score_network(seed);
    let mut log = TrainingLog::new(seed, cfg.hash());
    let mut rng = substream(seed, stream::STAGE2_BATCHES);
    let mut opt = Adam::new(cfg.adam());
    let half = (cfg.batch_size / 2).max(1);
    let start = Instant::now();
    let mut order: Vec<usize> = (0..normal.len()).collect();
    let mut best: Option<(f64, usize, crate::models::ScoreNetwork<f32>)> = None;

    for epoch in 0..cfg.stage2_epochs {
        order.shuffle(&mut rng);
        let mut total = 0f64;
        let mut batches = 0;
        for chunk in order.chunks(half) {
            let picks: Vec<usize> = (0..chunk.len()).map(|_| rng.gen_range(0..abnormal.len())).collect();
            let x = Tensor::concat_cols(&normal.columns(chunk), &abnormal.columns(&picks));
            let mut labels = vec![Label::Normal; chunk.len()];
            labels.extend(std::iter::repeat(Label::Abnormal).take(picks.len()));
            let raw = bundle.sin.score(&x, Mode::Train)?;
            let (loss, grad) = head_loss(head, &raw, &labels, cfg)?;
            if !loss.is_finite() {
                return Err(Error::contract(format!("non-finite score-network loss in epoch {epoch}")));
            }
            bundle.sin.zero_grad();
            bundle.sin.backward(&grad);
            opt.step(bundle.sin.params_mut());
            total += loss as f64;
            batches += 1;
        }
        let mut record = ScoreEpoch {
            epoch,
            loss: total / batches.max(1) as f64,
            validation_auc: None,
            validation_mean_normal: None,
            validation_mean_abnormal: None,
        };
        if let Some(v) = validation {
            let scored = ScoredSet::from_parts(&sin_scores(bundle, v)?, &v.labels)?;
            record.validation_mean_normal = scored.mean_score(Label::Normal);
            record.validation_mean_abnormal = scored.mean_score(Label::Abnormal);
            if let Ok(auc) = compute_auc(&scored) {
                record.validation_auc = Some(auc);
                if best.as_ref().map_or(true, |(b, _, _)| auc > *b) {
                    best = Some((auc, epoch, bundle.sin.clone()));
                }
            }
        }
        log.push(LogEvent::Score(record), start.elapsed().as_secs_f64());
    }

    let (selected_auc, selected_epoch) = match best {
        Some((auc, epoch, sin)) => {
            bundle.sin = sin;
            (Some(auc), epoch)
        }
        None => (None, cfg.stage2_epochs.saturating_sub(1)),
    };
    let threshold = match validation {
        Some(v) if !v.is_empty() => Some(select_threshold(&ScoredSet::from_parts(&sin_scores(bundle, v)?, &v.labels)?)?),
        _ => None,
    };
    bundle.state.sin_trained = true;
    bundle.state.threshold = threshold;
    log.push(
        LogEvent::Selection { epoch: selected_epoch, validation_auc: selected_auc, threshold },
        start.elapsed().as_secs_f64(),
    );
    if bundle.digest(&Network::STAGE1) != frozen {
        return Err(Error::contract("parameters outside the score network changed during score-network training"));
    }
    Ok(log)
}

fn require_scorer(bundle: &ModelBundle<f32>) -> Result<()> {
    if !bundle.state.sin_trained {
        return Err(Error::contract("the score network has not been trained"));
    }
    Ok(())
}

/// Raw anomaly score `f_S(f_E(x))` of one preprocessed image.
pub fn infer_score(bundle: &mut ModelBundle<f32>, image: &Image) -> Result<f64> {
    require_scorer(bundle)?;
    let x = batch_tensor::<f32>(&[image])?;
    let z = bundle.encoder.encode(&x, Mode::Eval)?.embedding;
    Ok(f64::from(bundle.sin.score(&z, Mode::Eval)?[0]))
}

/// Scores for every frame of a set, in order.
pub fn score_frames(bundle: &mut ModelBundle<f32>, set: &FrameSet) -> Result<ScoredSet> {
    require_scorer(bundle)?;
    let emb = embed_frames(bundle, set)?;
    score_embeddings(bundle, &emb)
}

pub fn score_embeddings(bundle: &mut ModelBundle<f32>, set: &EmbeddingSet) -> Result<ScoredSet> {
    require_scorer(bundle)?;
    ScoredSet::from_parts(&sin_scores(bundle, set)?, &set.labels)
}

/// Frames for the score-network stage of an ablation.
#[derive(Clone, Debug)]
pub struct StageData<'a> {
    pub train_normal: &'a FrameSet,
    pub train_abnormal: &'a FrameSet,
    pub validation: Option<&'a FrameSet>,
}

/// Ablations of the full two-stage pipeline. The classification heads reuse
/// `pretrained` (or run the representation stage when it is absent);
/// `NoRepresentationLearning` scores embeddings from the untrained encoder.
pub fn train_ablation(
    variant: AblationVariant,
    pretrained: Option<ModelBundle<f32>>,
    data: &StageData<'_>,
    cfg: &TrainConfig,
) -> Result<(ModelBundle<f32>, TrainingLog)> {
    let (mut bundle, mut log, head) = match variant {
        AblationVariant::NoRepresentationLearning => {
            (ModelBundle::new(cfg.embed_dim, cfg.rng_seed), TrainingLog::new(cfg.rng_seed, cfg.hash()), ScoreHead::Deviation)
        }
        AblationVariant::CrossEntropyHead | AblationVariant::FocalHead => {
            let head = if variant == AblationVariant::FocalHead { ScoreHead::Focal } else { ScoreHead::CrossEntropy };
            match pretrained {
                Some(b) if b.state.encoder_trained => (b, TrainingLog::new(cfg.rng_seed, cfg.hash()), head),
                Some(_) => return Err(Error::contract("ablation needs a trained encoder")),
                None => {
                    let (b, l) = train_encoder_stage(data.train_normal, cfg)?;
                    (b, l, head)
                }
            }
        }
    };
    let stage2 = train_sin_frames(&mut bundle, data.train_normal, data.train_abnormal, data.validation, head, cfg)?;
    log.extend(stage2);
    Ok((bundle, log))
}
