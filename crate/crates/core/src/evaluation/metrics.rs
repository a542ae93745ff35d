use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::{Error, Result};

/// Scores paired with ground-truth labels. Higher scores mean "more abnormal".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoredSet {
    pub items: Vec<(f64, Label)>,
}

impl ScoredSet {
    pub fn new(items: Vec<(f64, Label)>) -> Self {
        Self { items }
    }

    pub fn from_parts(scores: &[f64], labels: &[Label]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        Ok(Self { items: scores.iter().copied().zip(labels.iter().copied()).collect() })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.items.iter().filter(|(_, l)| *l == label).count()
    }

    pub fn scores(&self, label: Label) -> impl Iterator<Item = f64> + '_ {
        self.items.iter().filter(move |(_, l)| *l == label).map(|(s, _)| *s)
    }

    pub fn mean_score(&self, label: Label) -> Option<f64> {
        let n = self.count(label);
        (n > 0).then(|| self.scores(label).sum::<f64>() / n as f64)
    }

    /// Same scores with every label flipped.
    pub fn swapped(&self) -> Self {
        let flip = |l: Label| if l.is_abnormal() { Label::Normal } else { Label::Abnormal };
        Self { items: self.items.iter().map(|&(s, l)| (s, flip(l))).collect() }
    }
}

/// Probability that a random abnormal sample outscores a random normal one,
/// ties counting one half (normalized Mann-Whitney U, via midranks).
pub fn compute_auc(scored: &ScoredSet) -> Result<f64> {
    let n_abn = scored.count(Label::Abnormal);
    let n_norm = scored.count(Label::Normal);
    if n_abn == 0 || n_norm == 0 {
        return Err(Error::contract(format!(
            "AUC needs both classes, got {n_norm} normal and {n_abn} abnormal"
        )));
    }
    if scored.items.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::contract("AUC input contains NaN scores"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored.items[a].0.total_cmp(&scored.items[b].0));
    // doubled midranks keep everything integral
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored.items[order[j + 1]].0 == scored.items[order[i]].0 {
            j += 1;
        }
        let midrank2 = (i + 1 + j + 1) as u128;
        for &idx in &order[i..=j] {
            if scored.items[idx].1.is_abnormal() {
                rank_sum2 += midrank2;
            }
        }
        i = j + 1;
    }
    let na = n_abn as u128;
    let u2 = rank_sum2 - na * (na + 1);
    Ok(u2 as f64 / 2.0 / (n_abn as f64 * n_norm as f64))
}

/// Counts with Normal as the positive class: a frame is predicted abnormal
/// iff its score exceeds the threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Normal predicted normal.
    pub tp: usize,
    /// Abnormal predicted abnormal.
    pub tn: usize,
    /// Abnormal predicted normal.
    pub fp: usize,
    /// Normal predicted abnormal.
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Mean of the per-class recalls; classes absent from the set are skipped.
    pub fn balanced_accuracy(&self) -> f64 {
        let mut parts = Vec::new();
        if self.tp + self.fn_ > 0 {
            parts.push(self.tp as f64 / (self.tp + self.fn_) as f64);
        }
        if self.tn + self.fp > 0 {
            parts.push(self.tn as f64 / (self.tn + self.fp) as f64);
        }
        if parts.is_empty() {
            0.0
        } else {
            parts.iter().sum::<f64>() / parts.len() as f64
        }
    }
}

pub fn classify(score: f64, threshold: f64) -> Label {
    if score > threshold {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

pub fn confusion_at_threshold(scored: &ScoredSet, threshold: f64) -> Confusion {
    let mut c = Confusion::default();
    for &(s, label) in &scored.items {
        match (label, classify(s, threshold)) {
            (Label::Normal, Label::Normal) => c.tp += 1,
            (Label::Normal, Label::Abnormal) => c.fn_ += 1,
            (Label::Abnormal, Label::Abnormal) => c.tn += 1,
            (Label::Abnormal, Label::Normal) => c.fp += 1,
        }
    }
    c
}

/// Threshold maximizing balanced accuracy. Candidates are midpoints between
/// consecutive distinct scores; ties go to the smallest candidate.
pub fn select_threshold(scored: &ScoredSet) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::contract("cannot choose a threshold on an empty set"));
    }
    let mut values: Vec<f64> = scored.items.iter().map(|(s, _)| *s).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() == 1 {
        return Ok(values[0]);
    }
    let mut best = (f64::NEG_INFINITY, values[0]);
    for w in values.windows(2) {
        let tau = 0.5 * (w[0] + w[1]);
        let ba = confusion_at_threshold(scored, tau).balanced_accuracy();
        if ba > best.0 {
            best = (ba, tau);
        }
    }
    Ok(best.1)
}
