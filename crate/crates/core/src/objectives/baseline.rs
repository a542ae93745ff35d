use serde::{Deserialize, Serialize};

use super::deviation::check_batch;
use crate::data::Label;
use crate::nn::Float;
use crate::Result;

pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    CrossEntropy,
    Focal,
}

/// Classification losses on `p = sigmoid(raw)` with abnormal as the
/// positive class. `focal_gamma` is ignored for cross-entropy.
pub fn baseline_loss<T: Float>(kind: BaselineKind, raw: &[T], labels: &[Label], focal_gamma: f64) -> Result<T> {
    Ok(baseline_loss_with_grad(kind, raw, labels, focal_gamma)?.0)
}

pub fn baseline_loss_with_grad<T: Float>(
    kind: BaselineKind,
    raw: &[T],
    labels: &[Label],
    focal_gamma: f64,
) -> Result<(T, Vec<T>)> {
    check_batch(raw, labels)?;
    let n = T::from_f64(raw.len() as f64);
    let gamma = T::from_f64(focal_gamma);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(raw.len());
    for (&r, &label) in raw.iter().zip(labels) {
        // logit of the true class
        let sign = if label.is_abnormal() { T::one() } else { -T::one() };
        let x = sign * r;
        let neg_log_pt = softplus(-x);
        let pt = T::one() / (T::one() + (-x).exp());
        let q = T::one() - pt;
        let (loss, dx) = match kind {
            BaselineKind::CrossEntropy => (neg_log_pt, -q),
            BaselineKind::Focal => {
                let loss = q.powf(gamma) * neg_log_pt;
                let mut dx = -q.powf(gamma + T::one());
                if focal_gamma != 0.0 {
                    dx += -gamma * q.powf(gamma) * pt * neg_log_pt;
                }
                (loss, dx)
            }
        };
        total += loss;
        grad.push(sign * dx / n);
    }
    Ok((total / n, grad))
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Float>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
