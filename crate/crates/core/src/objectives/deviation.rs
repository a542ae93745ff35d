use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::nn::Float;
use crate::{Error, Result};

/// Deviation-loss settings: scores are standardized as
/// `s = (raw - mu_s) / sigma_s`; abnormal samples are pushed to `s >= margin`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationConfig {
    pub margin: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self { margin: 6.0, mu_s: 0.0, sigma_s: 1.0 }
    }
}

impl DeviationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !(self.sigma_s > 0.0) || !self.mu_s.is_finite() {
            return Err(Error::config(format!(
                "deviation loss needs margin > 0 and sigma_s > 0, got margin {} sigma_s {}",
                self.margin, self.sigma_s
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_batch<T>(raw: &[T], labels: &[Label]) -> Result<()> {
    if raw.is_empty() {
        return Err(Error::contract("loss over an empty batch"));
    }
    if raw.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", raw.len(), labels.len())));
    }
    Ok(())
}

/// Batch mean of `|s|` for normal samples and `max(0, margin - s)` for
/// abnormal ones.
pub fn deviation_loss<T: Float>(raw: &[T], labels: &[Label], cfg: &DeviationConfig) -> Result<T> {
    Ok(deviation_loss_with_grad(raw, labels, cfg)?.0)
}

/// Loss and its (sub)gradient with respect to each raw score. At the kinks
/// (`s = 0` for normal, `s = margin` for abnormal) the zero subgradient is used.
pub fn deviation_loss_with_grad<T: Float>(
    raw: &[T],
    labels: &[Label],
    cfg: &DeviationConfig,
) -> Result<(T, Vec<T>)> {
    check_batch(raw, labels)?;
    cfg.validate()?;
    let mu = T::from_f64(cfg.mu_s);
    let sigma = T::from_f64(cfg.sigma_s);
    let margin = T::from_f64(cfg.margin);
    let n = T::from_f64(raw.len() as f64);
    let mut total = T::zero();
    let mut grad = Vec::with_capacity(raw.len());
    for (&r, &label) in raw.iter().zip(labels) {
        let s = (r - mu) / sigma;
        let (loss, ds) = match label {
            Label::Normal => (s.abs(), if s > T::zero() { T::one() } else if s < T::zero() { -T::one() } else { T::zero() }),
            Label::Abnormal => {
                if s < margin {
                    (margin - s, -T::one())
                } else {
                    (T::zero(), T::zero())
                }
            }
        };
        total += loss;
        grad.push(ds / sigma / n);
    }
    Ok((total / n, grad))
}
