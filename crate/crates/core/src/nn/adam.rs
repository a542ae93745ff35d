use serde::{Deserialize, Serialize};

use super::{Float, Param};

/// Adaptive-moment settings. Moment coefficients default to the values
/// conventionally used with this optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self { learning_rate, beta1: default_beta1(), beta2: default_beta2(), epsilon: default_epsilon() }
    }
}

pub struct Adam<T> {
    cfg: AdamConfig,
    step: i32,
    moments: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Float> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, step: 0, moments: Vec::new() }
    }

    /// Apply one update to every trainable parameter. The parameter list must
    /// come in the same order on every call.
    pub fn step(&mut self, params: Vec<&mut Param<T>>) {
        self.step += 1;
        let trainable: Vec<&mut Param<T>> = params.into_iter().filter(|p| p.trainable).collect();
        if self.moments.is_empty() {
            self.moments = trainable.iter().map(|p| (vec![T::zero(); p.len()], vec![T::zero(); p.len()])).collect();
        }
        assert_eq!(self.moments.len(), trainable.len(), "optimizer reused across different models");

        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let one = T::one();
        let bias1 = one - T::from_f64(self.cfg.beta1.powi(self.step));
        let bias2 = one - T::from_f64(self.cfg.beta2.powi(self.step));
        let lr = T::from_f64(self.cfg.learning_rate);
        let eps = T::from_f64(self.cfg.epsilon);

        for (p, (m, v)) in trainable.into_iter().zip(self.moments.iter_mut()) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (one - b1) * g;
                v[i] = b2 * v[i] + (one - b2) * g * g;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                p.value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Param::<f64>::filled("w", &[2], 1.0);
        p.grad = vec![3.0, -0.5];
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.1));
        opt.step(vec![&mut p]);
        // bias-corrected first step is lr * sign(g) up to epsilon
        assert!((p.value[0] - 0.9).abs() < 1e-6);
        assert!((p.value[1] - 1.1).abs() < 1e-6);
    }

    #[test]
    fn buffers_are_left_alone() {
        let mut p = Param::<f32>::buffer("running_mean", &[1], 0.0);
        p.grad = vec![1.0];
        let mut opt = Adam::new(AdamConfig::with_learning_rate(0.1));
        opt.step(vec![&mut p]);
        assert_eq!(p.value, vec![0.0]);
    }
}
