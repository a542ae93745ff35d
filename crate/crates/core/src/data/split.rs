use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::{FrameSet, Label, LabeledFrame, Partition};
use crate::rng::{stream, substream};
use crate::{Error, Result};

/// How to partition a corpus by patient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    /// Fractions of patients assigned to training, validation and test.
    pub proportions: [f64; 3],
    pub test_abnormal_fraction: f64,
    /// Exact test-set size; the largest feasible set when absent.
    #[serde(default)]
    pub test_size: Option<usize>,
    /// Cap on validation frames per class.
    #[serde(default)]
    pub validation_per_class: Option<usize>,
    /// Cap on training normal frames.
    #[serde(default)]
    pub train_normal_size: Option<usize>,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            proportions: [0.6, 0.2, 0.2],
            test_abnormal_fraction: 0.25,
            test_size: None,
            validation_per_class: None,
            train_normal_size: None,
        }
    }
}

impl SplitPlan {
    fn validate(&self) -> Result<()> {
        let sum: f64 = self.proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.proportions.iter().any(|p| !(*p > 0.0)) {
            return Err(Error::config(format!("split proportions must be positive and sum to 1, got {:?}", self.proportions)));
        }
        if !(self.test_abnormal_fraction > 0.0 && self.test_abnormal_fraction < 1.0) {
            return Err(Error::config("test abnormal fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Patient-disjoint partitions.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub train_normal: FrameSet,
    /// Pool of training abnormal frames; few-shot subsets are drawn from it.
    pub train_abnormal: FrameSet,
    pub validation: FrameSet,
    pub test: FrameSet,
}

impl CorpusSplit {
    /// Patient ids of the training partitions plus validation.
    pub fn development_patients(&self) -> BTreeSet<u32> {
        let mut s = self.train_normal.patients();
        s.extend(self.train_abnormal.patients());
        s.extend(self.validation.patients());
        s
    }
}

fn pick(frames: Vec<&LabeledFrame>, count: usize, rng: &mut impl rand::Rng) -> Vec<LabeledFrame> {
    let mut idx = index::sample(rng, frames.len(), count.min(frames.len())).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| frames[i].clone()).collect()
}

/// Assign whole patients to training, validation and test, then shape the
/// test set to the configured abnormal fraction and balance validation.
pub fn split_patientwise(frames: &[LabeledFrame], plan: &SplitPlan, rng_seed: u64) -> Result<CorpusSplit> {
    plan.validate()?;
    let mut patients: Vec<u32> = frames.iter().map(|f| f.patient_id).collect::<BTreeSet<_>>().into_iter().collect();
    if patients.len() < 3 {
        return Err(Error::contract(format!(
            "patient-disjoint split needs at least 3 patients, got {}",
            patients.len()
        )));
    }
    let mut rng = substream(rng_seed, stream::SPLIT);
    patients.shuffle(&mut rng);
    let total = patients.len();
    let n_test = ((plan.proportions[2] * total as f64).round() as usize).max(1);
    let n_val = ((plan.proportions[1] * total as f64).round() as usize).max(1);
    if n_test + n_val >= total {
        return Err(Error::contract(format!("{total} patients cannot fill three disjoint partitions")));
    }
    let mut role = BTreeMap::new();
    for (i, &p) in patients.iter().enumerate() {
        let r = if i < n_test {
            Partition::Test
        } else if i < n_test + n_val {
            Partition::Validation
        } else {
            Partition::TrainNormal
        };
        role.insert(p, r);
    }
    let of = |part: Partition, label: Label| -> Vec<&LabeledFrame> {
        frames.iter().filter(|f| role[&f.patient_id] == part && f.label == label).collect()
    };

    // test: hit the abnormal fraction exactly (up to rounding)
    let f = plan.test_abnormal_fraction;
    let (tn, ta) = (of(Partition::Test, Label::Normal), of(Partition::Test, Label::Abnormal));
    let (n_norm, n_abn) = match plan.test_size {
        Some(size) => {
            let a = (f * size as f64).round() as usize;
            (size - a, a)
        }
        None => {
            let ratio = (1.0 - f) / f;
            if (ta.len() as f64) * ratio <= tn.len() as f64 {
                ((ta.len() as f64 * ratio).round() as usize, ta.len())
            } else {
                (tn.len(), (tn.len() as f64 / ratio).round() as usize)
            }
        }
    };
    if n_norm > tn.len() || n_abn > ta.len() {
        return Err(Error::config(format!(
            "test patients hold {} normal / {} abnormal frames, need {n_norm} / {n_abn}",
            tn.len(),
            ta.len()
        )));
    }
    let mut test = pick(tn, n_norm, &mut rng);
    test.extend(pick(ta, n_abn, &mut rng));

    let (vn, va) = (of(Partition::Validation, Label::Normal), of(Partition::Validation, Label::Abnormal));
    let per_class = vn.len().min(va.len()).min(plan.validation_per_class.unwrap_or(usize::MAX));
    let mut validation = pick(vn, per_class, &mut rng);
    validation.extend(pick(va, per_class, &mut rng));

    let trn = of(Partition::TrainNormal, Label::Normal);
    let keep = plan.train_normal_size.unwrap_or(trn.len());
    if keep > trn.len() {
        return Err(Error::config(format!("only {} training normal frames available, {keep} requested", trn.len())));
    }
    let train_normal = pick(trn, keep, &mut rng);
    let train_abnormal = of(Partition::TrainNormal, Label::Abnormal).into_iter().cloned().collect();

    Ok(CorpusSplit {
        train_normal: FrameSet::new(Partition::TrainNormal, train_normal),
        train_abnormal: FrameSet::new(Partition::TrainAbnormal, train_abnormal),
        validation: FrameSet::new(Partition::Validation, validation),
        test: FrameSet::new(Partition::Test, test),
    })
}

/// Uniform sample of `k` frames without replacement from the training
/// abnormal pool, deterministic per seed.
pub fn sample_abnormal_subset(pool: &FrameSet, k: usize, rng_seed: u64) -> Result<FrameSet> {
    pool.require(&[Partition::TrainAbnormal], "abnormal subset sampling")?;
    if k > pool.len() {
        return Err(Error::config(format!("cannot sample {k} abnormal frames from a pool of {}", pool.len())));
    }
    let mut rng = substream(rng_seed, stream::SUBSET);
    let refs: Vec<&LabeledFrame> = pool.frames.iter().collect();
    Ok(FrameSet::new(Partition::TrainAbnormal, pick(refs, k, &mut rng)))
}
