use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{Float, Tensor};
use crate::{Error, Result};

/// Gaussian prior for embeddings. Missing fields mean the standard choice:
/// zero mean, identity covariance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

impl PriorSpec {
    pub fn standard() -> Self {
        Self::default()
    }

    /// Validate against the embedding size and factor the covariance.
    pub fn sampler(&self, dim: usize) -> Result<PriorSampler> {
        let mean = match &self.mean {
            Some(m) if m.len() != dim => {
                return Err(Error::config(format!("prior mean has {} entries, embedding has {dim}", m.len())))
            }
            Some(m) => m.clone(),
            None => vec![0.0; dim],
        };
        let chol = match &self.covariance {
            None => None,
            Some(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::config(format!("prior covariance must be {dim}x{dim}")));
                }
                Some(cholesky(rows)?)
            }
        };
        Ok(PriorSampler { mean, chol, dim })
    }
}

/// Lower-triangular Cholesky factor, row-major. Fails unless the matrix is
/// symmetric positive definite.
fn cholesky(a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    for i in 0..n {
        for j in 0..i {
            if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                return Err(Error::config("prior covariance is not symmetric"));
            }
        }
    }
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 || !d.is_finite() {
                    return Err(Error::config("prior covariance is not positive definite"));
                }
                l[i * n + i] = d.sqrt();
            } else {
                l[i * n + j] = (a[i][j] - s) / l[j * n + j];
            }
        }
    }
    Ok(l)
}

#[derive(Clone, Debug)]
pub struct PriorSampler {
    mean: Vec<f64>,
    chol: Option<Vec<f64>>,
    dim: usize,
}

impl PriorSampler {
    /// `count` draws as the columns of a `[Z, count]` tensor.
    pub fn sample<T: Float, R: Rng>(&self, count: usize, rng: &mut R) -> Tensor<T> {
        let d = self.dim;
        let mut out = vec![T::zero(); d * count];
        let mut eps = vec![0.0; d];
        for j in 0..count {
            eps.iter_mut().for_each(|e| *e = rng.sample(StandardNormal));
            for i in 0..d {
                let v = match &self.chol {
                    None => eps[i],
                    Some(l) => (0..=i).map(|k| l[i * d + k] * eps[k]).sum(),
                };
                out[i * count + j] = T::from_f64(self.mean[i] + v);
            }
        }
        Tensor::from_vec(&[d, count], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn non_spd_covariance_is_rejected() {
        let spec = PriorSpec { mean: None, covariance: Some(vec![vec![1.0, 2.0], vec![2.0, 1.0]]) };
        assert!(matches!(spec.sampler(2), Err(Error::Config(_))));
        let asym = PriorSpec { mean: None, covariance: Some(vec![vec![1.0, 0.5], vec![0.0, 1.0]]) };
        assert!(asym.sampler(2).is_err());
    }

    #[test]
    fn samples_follow_the_requested_moments() {
        let spec = PriorSpec {
            mean: Some(vec![1.0, -2.0]),
            covariance: Some(vec![vec![4.0, 1.2], vec![1.2, 1.0]]),
        };
        let s = spec.sampler(2).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let n = 40_000;
        let t: Tensor<f64> = s.sample(n, &mut rng);
        let (a, b) = (&t.data()[..n], &t.data()[n..]);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64;
        assert!((ma - 1.0).abs() < 0.05 && (mb + 2.0).abs() < 0.05);
        assert!((va - 4.0).abs() < 0.15 && (cov - 1.2).abs() < 0.06);
    }
}
