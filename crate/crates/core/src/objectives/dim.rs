use serde::{Deserialize, Serialize};

use super::dv::{dv_bound_with_grad, local_dv_with_grad};
use crate::models::{sigmoid, Encoded, ModelBundle, PROB_EPS};
use crate::nn::{Float, Mode, Parameterized, Tensor};
use crate::{Error, Result};

/// Weights of the global MI, local MI and prior-matching terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for DimWeights {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.1, gamma: 1.0 }
    }
}

impl DimWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.alpha, self.beta, self.gamma].iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::config(format!("objective weights must be non-negative, got {self:?}")));
        }
        Ok(())
    }
}

/// Every term of the representation objective for one batch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimTerms<T> {
    /// Global DV bound.
    pub global: T,
    /// Location-averaged local DV bound.
    pub local: T,
    /// `E_prior[ln d(v)] + E_emb[ln(1 - d(z))]`.
    pub prior_value: T,
    /// Negated `prior_value`; minimized by the prior discriminator.
    pub disc_loss: T,
    /// `-E_emb[ln d(z)]`; minimized by the encoder.
    pub enc_loss: T,
}

/// Scalar losses seen by each side of the alternating optimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DimLosses<T> {
    /// `-(alpha * global + beta * local) + gamma * enc_loss`
    pub encoder_side: T,
    pub global_disc: T,
    pub local_disc: T,
    pub prior_disc: T,
}

impl<T: Float> DimTerms<T> {
    pub fn combine(&self, w: &DimWeights) -> DimLosses<T> {
        let (a, b, g) = (T::from_f64(w.alpha), T::from_f64(w.beta), T::from_f64(w.gamma));
        DimLosses {
            encoder_side: -(a * self.global + b * self.local) + g * self.enc_loss,
            global_disc: -self.global,
            local_disc: -self.local,
            prior_disc: self.disc_loss,
        }
    }
}

/// Which term drives which parameters in [`dim_gradients`]. After the call,
/// encoder gradients hold `d/dθ_E (encoder[0]·global + encoder[1]·local +
/// encoder[2]·enc_loss)`, and each discriminator holds the gradient of its
/// own term (global, local, disc_loss) times its coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientRoute {
    pub encoder: [f64; 3],
    pub global_disc: f64,
    pub local_disc: f64,
    pub prior_disc: f64,
}

impl GradientRoute {
    /// Gradients of the losses minimized during representation training.
    pub fn training(w: &DimWeights) -> Self {
        Self { encoder: [-w.alpha, -w.beta, w.gamma], global_disc: -1.0, local_disc: -1.0, prior_disc: 1.0 }
    }

    pub fn global_only() -> Self {
        Self { encoder: [1.0, 0.0, 0.0], global_disc: 1.0, local_disc: 0.0, prior_disc: 0.0 }
    }

    pub fn local_only() -> Self {
        Self { encoder: [0.0, 1.0, 0.0], global_disc: 0.0, local_disc: 1.0, prior_disc: 0.0 }
    }

    /// Encoder gets `enc_loss`, prior discriminator gets `disc_loss`.
    pub fn prior_only() -> Self {
        Self { encoder: [0.0, 0.0, 1.0], global_disc: 0.0, local_disc: 0.0, prior_disc: 1.0 }
    }
}

fn check_batch<T: Float>(images: &Tensor<T>) -> Result<()> {
    if images.shape().len() != 4 || images.dim(1) < 2 {
        return Err(Error::contract(format!(
            "mutual-information terms need a batch of at least 2 images, got shape {:?}",
            images.shape()
        )));
    }
    Ok(())
}

/// Mismatched pairs come from rolling the embedding batch by one.
fn negatives<T: Float>(enc: &Encoded<T>) -> Tensor<T> {
    enc.embedding.roll_cols(1)
}

struct PriorTerms<T> {
    value: T,
    disc_loss: T,
    enc_loss: T,
    d_disc: Vec<T>,
    d_enc: Vec<T>,
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Float>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Prior-matching terms from discriminator logits: the first `n_prior`
/// entries score prior draws, the rest score embeddings. Uses
/// `ln d = -softplus(-l)` and `ln(1 - d) = -softplus(l)`.
fn prior_terms<T: Float>(logits: &[T], n_prior: usize) -> PriorTerms<T> {
    let (lv, lz) = logits.split_at(n_prior);
    let nv = T::from_f64(lv.len() as f64);
    let nz = T::from_f64(lz.len() as f64);
    let real = -(lv.iter().map(|&l| softplus(-l)).sum::<T>() / nv);
    let fake = -(lz.iter().map(|&l| softplus(l)).sum::<T>() / nz);
    let enc_loss = lz.iter().map(|&l| softplus(-l)).sum::<T>() / nz;
    let mut d_disc: Vec<T> = lv.iter().map(|&l| -sigmoid(-l) / nv).collect();
    d_disc.extend(lz.iter().map(|&l| sigmoid(l) / nz));
    let mut d_enc = vec![T::zero(); n_prior];
    d_enc.extend(lz.iter().map(|&l| -sigmoid(-l) / nz));
    PriorTerms { value: real + fake, disc_loss: -(real + fake), enc_loss, d_disc, d_enc }
}

fn check_prior_samples<T: Float>(samples: &Tensor<T>, dim: usize) -> Result<()> {
    if samples.shape().len() != 2 || samples.dim(0) != dim || samples.dim(1) == 0 {
        return Err(Error::shape(format!("prior samples must be [{dim}, M>0], got {:?}", samples.shape())));
    }
    Ok(())
}

/// Global DV bound between images and their embeddings.
pub fn global_mi_objective<T: Float>(bundle: &mut ModelBundle<T>, images: &Tensor<T>, mode: Mode) -> Result<T> {
    check_batch(images)?;
    let enc = bundle.encoder.encode(images, mode)?;
    let s = bundle.global.score_pairs(&enc.local_map, &enc.embedding, &negatives(&enc))?;
    Ok(dv_bound_with_grad(&s.positive, &s.negative)?.0)
}

/// Local DV bound averaged over all locations of the local feature map.
pub fn local_mi_objective<T: Float>(bundle: &mut ModelBundle<T>, images: &Tensor<T>, mode: Mode) -> Result<T> {
    check_batch(images)?;
    let enc = bundle.encoder.encode(images, mode)?;
    let regions = enc.local_map.dim(2) * enc.local_map.dim(3);
    let s = bundle.local.score_pairs(&enc.local_map, &enc.embedding, &negatives(&enc))?;
    Ok(local_dv_with_grad(&s.positive, &s.negative, regions)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorLosses<T> {
    pub value: T,
    pub disc_loss: T,
    pub enc_loss: T,
}

/// Adversarial prior-matching losses for a batch of images and a batch of
/// prior draws (`[Z, M]`).
pub fn prior_losses<T: Float>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    prior_samples: &Tensor<T>,
    mode: Mode,
) -> Result<PriorLosses<T>> {
    check_prior_samples(prior_samples, bundle.embed_dim)?;
    let enc = bundle.encoder.encode(images, mode)?;
    let both = Tensor::concat_cols(prior_samples, &enc.embedding);
    let logits = bundle.prior.logits(&both)?;
    let t = prior_terms(&logits, prior_samples.dim(1));
    Ok(PriorLosses { value: t.value, disc_loss: t.disc_loss, enc_loss: t.enc_loss })
}

/// Prior-matching terms for probabilities already produced by a
/// discriminator: `(value, disc_loss, enc_loss)`.
pub fn prior_losses_from_probabilities<T: Float>(prior_probs: &[T], embedding_probs: &[T]) -> PriorLosses<T> {
    let eps = T::from_f64(PROB_EPS);
    let logits: Vec<T> = prior_probs
        .iter()
        .chain(embedding_probs)
        .map(|&p| {
            let p = p.max(eps).min(T::one() - eps);
            (p / (T::one() - p)).ln()
        })
        .collect();
    let t = prior_terms(&logits, prior_probs.len());
    PriorLosses { value: t.value, disc_loss: t.disc_loss, enc_loss: t.enc_loss }
}

/// All terms in one forward pass (no gradients).
pub fn dim_terms<T: Float>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    prior_samples: &Tensor<T>,
    mode: Mode,
) -> Result<DimTerms<T>> {
    forward_terms(bundle, images, prior_samples, mode).map(|(t, _)| t)
}

/// Combined objective for the encoder side and each discriminator.
pub fn dim_total<T: Float>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    weights: &DimWeights,
    prior_samples: &Tensor<T>,
    mode: Mode,
) -> Result<DimLosses<T>> {
    weights.validate()?;
    Ok(dim_terms(bundle, images, prior_samples, mode)?.combine(weights))
}

struct ForwardState<T> {
    n: usize,
    n_prior: usize,
    global_grads: (Vec<T>, Vec<T>),
    local_grads: (Vec<T>, Vec<T>),
    prior: PriorTerms<T>,
}

fn forward_terms<T: Float>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    prior_samples: &Tensor<T>,
    mode: Mode,
) -> Result<(DimTerms<T>, ForwardState<T>)> {
    check_batch(images)?;
    check_prior_samples(prior_samples, bundle.embed_dim)?;
    let enc = bundle.encoder.encode(images, mode)?;
    let neg = negatives(&enc);
    let n = enc.embedding.dim(1);
    let regions = enc.local_map.dim(2) * enc.local_map.dim(3);

    let gs = bundle.global.score_pairs(&enc.local_map, &enc.embedding, &neg)?;
    let (global, gp, gn) = dv_bound_with_grad(&gs.positive, &gs.negative)?;
    let ls = bundle.local.score_pairs(&enc.local_map, &enc.embedding, &neg)?;
    let (local, lp, ln) = local_dv_with_grad(&ls.positive, &ls.negative, regions)?;
    let both = Tensor::concat_cols(prior_samples, &enc.embedding);
    let logits = bundle.prior.logits(&both)?;
    let prior = prior_terms(&logits, prior_samples.dim(1));

    let terms = DimTerms {
        global,
        local,
        prior_value: prior.value,
        disc_loss: prior.disc_loss,
        enc_loss: prior.enc_loss,
    };
    let state = ForwardState {
        n,
        n_prior: prior_samples.dim(1),
        global_grads: (gp, gn),
        local_grads: (lp, ln),
        prior,
    };
    Ok((terms, state))
}

/// Forward and backward pass over all representation-learning terms.
///
/// Zeroes the gradients of the encoder and the three discriminators, then
/// fills them according to `route`. The encoder's gradient is evaluated at
/// the current discriminator parameters.
pub fn dim_gradients<T: Float>(
    bundle: &mut ModelBundle<T>,
    images: &Tensor<T>,
    prior_samples: &Tensor<T>,
    route: &GradientRoute,
    mode: Mode,
) -> Result<DimTerms<T>> {
    bundle.encoder.zero_grad();
    bundle.global.zero_grad();
    bundle.local.zero_grad();
    bundle.prior.zero_grad();
    let (terms, st) = forward_terms(bundle, images, prior_samples, mode)?;
    let n = st.n;
    let c = |v: f64| T::from_f64(v);

    let g = bundle.global.backward(&st.global_grads.0, &st.global_grads.1);
    bundle.global.scale_grad(c(route.global_disc));
    let l = bundle.local.backward(&st.local_grads.0, &st.local_grads.1);
    bundle.local.scale_grad(c(route.local_disc));

    // encoder-side prior gradient first, then the discriminator's own
    let dz_prior = bundle.prior.backward(&st.prior.d_enc).slice_cols(st.n_prior, st.n_prior + n);
    bundle.prior.zero_grad();
    bundle.prior.backward(&st.prior.d_disc);
    bundle.prior.scale_grad(c(route.prior_disc));

    let [eg, el, ep] = route.encoder;
    let mut dz = Tensor::zeros(&[bundle.embed_dim, n]);
    let mut d_map = Tensor::zeros(g.local_map.shape());
    for (coef, grads) in [(eg, &g), (el, &l)] {
        if coef == 0.0 {
            continue;
        }
        let mut part = grads.positive_embedding.clone();
        part.add_assign(&grads.negative_embedding.unroll_cols(1));
        part.scale(c(coef));
        dz.add_assign(&part);
        let mut m = grads.local_map.clone();
        m.scale(c(coef));
        d_map.add_assign(&m);
    }
    if ep != 0.0 {
        let mut part = dz_prior;
        part.scale(c(ep));
        dz.add_assign(&part);
    }
    bundle.encoder.backward(&dz, Some(&d_map));
    Ok(terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_prior_value() {
        let t = prior_losses_from_probabilities(&[0.5f64; 3], &[0.5f64; 5]);
        assert!((t.value - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(t.disc_loss, -t.value);
        assert!((t.enc_loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn saturated_probabilities_stay_finite() {
        let t = prior_losses_from_probabilities(&[0.0f64, 1.0], &[1.0f64, 0.0]);
        assert!(t.value.is_finite() && t.disc_loss.is_finite() && t.enc_loss.is_finite());
        let bound = -2.0 * PROB_EPS.ln();
        assert!(t.disc_loss <= bound + 1e-9);
    }

    #[test]
    fn weights_validate() {
        assert!(DimWeights { alpha: -0.1, beta: 0.0, gamma: 0.0 }.validate().is_err());
        assert!(DimWeights::default().validate().is_ok());
    }
}
