use rand::Rng;

use super::encoder::LOCAL_CHANNELS;
use crate::nn::{
    leaky_gain, matmul, Conv2d, Dense, Float, LeakyRelu, Mat, Param, Parameterized, Tensor,
};
use crate::{Error, Result};

/// Probabilities from the prior discriminator are clamped to `[EPS, 1 - EPS]`.
pub const PROB_EPS: f64 = 1e-6;

pub const GLOBAL_FILTERS: [usize; 3] = [128, 64, 32];
pub const GLOBAL_HEAD_HIDDEN: usize = 512;
pub const LOCAL_FILTERS: [usize; 3] = [192, 512, 512];
pub const PRIOR_UNITS: [usize; 3] = [1000, 200, 1];

/// Scores for matched (image, own embedding) pairs and mismatched pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairScores<T> {
    pub positive: Vec<T>,
    pub negative: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct PairGrads<T> {
    pub local_map: Tensor<T>,
    pub positive_embedding: Tensor<T>,
    pub negative_embedding: Tensor<T>,
}

fn check_pair_inputs<T: Float>(map: &Tensor<T>, pos: &Tensor<T>, neg: &Tensor<T>, z: usize) -> Result<usize> {
    let s = map.shape();
    if s.len() != 4 || s[0] != LOCAL_CHANNELS {
        return Err(Error::shape(format!("local map must be [{LOCAL_CHANNELS}, N, H, W], got {s:?}")));
    }
    let n = s[1];
    for e in [pos, neg] {
        if e.shape() != [z, n] {
            return Err(Error::shape(format!("embedding batch must be [{z}, {n}], got {:?}", e.shape())));
        }
    }
    Ok(n)
}

/// Global discriminator: 3x3 convolutions over the local feature map,
/// spatially averaged, concatenated with an embedding and scored by a
/// two-layer head.
#[derive(Clone, Debug)]
pub struct GlobalDiscriminator<T> {
    convs: Vec<Conv2d<T>>,
    acts: Vec<LeakyRelu>,
    hidden: Dense<T>,
    hidden_act: LeakyRelu,
    readout: Dense<T>,
    embed_dim: usize,
    conv_shape: Vec<usize>,
}

impl<T: Float> GlobalDiscriminator<T> {
    pub fn new<R: Rng>(embed_dim: usize, rng: &mut R) -> Self {
        let mut in_ch = LOCAL_CHANNELS;
        let convs = GLOBAL_FILTERS
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let c = Conv2d::new(&format!("global.conv{}", i + 1), in_ch, f, 3, 1, 0, leaky_gain(), rng);
                in_ch = f;
                c
            })
            .collect();
        let fused = GLOBAL_FILTERS[2] + embed_dim;
        Self {
            convs,
            acts: vec![LeakyRelu::default(); 3],
            hidden: Dense::new("global.hidden", fused, GLOBAL_HEAD_HIDDEN, leaky_gain(), rng),
            hidden_act: LeakyRelu::default(),
            readout: Dense::new("global.readout", GLOBAL_HEAD_HIDDEN, 1, 1.0, rng),
            embed_dim,
            conv_shape: Vec::new(),
        }
    }

    pub fn score_pairs(
        &mut self,
        local_map: &Tensor<T>,
        positive: &Tensor<T>,
        negative: &Tensor<T>,
    ) -> Result<PairScores<T>> {
        let n = check_pair_inputs(local_map, positive, negative, self.embed_dim)?;
        let mut h = local_map.clone();
        for (conv, act) in self.convs.iter_mut().zip(&mut self.acts) {
            h = act.forward(&conv.forward(&h));
        }
        self.conv_shape = h.shape().to_vec();
        let c = h.dim(0);
        let area = h.dim(2) * h.dim(3);
        let inv_area = T::from_f64(1.0 / area as f64);
        let z = self.embed_dim;
        // head input [c + z, 2n]: pooled features repeated, then both embedding sets
        let mut fused = vec![T::zero(); (c + z) * 2 * n];
        for ch in 0..c {
            for b in 0..n {
                let mean = h.data()[(ch * n + b) * area..(ch * n + b + 1) * area].iter().copied().sum::<T>() * inv_area;
                fused[ch * 2 * n + b] = mean;
                fused[ch * 2 * n + n + b] = mean;
            }
        }
        for j in 0..z {
            let row = &mut fused[(c + j) * 2 * n..(c + j + 1) * 2 * n];
            row[..n].copy_from_slice(&positive.data()[j * n..(j + 1) * n]);
            row[n..].copy_from_slice(&negative.data()[j * n..(j + 1) * n]);
        }
        let fused = Tensor::from_vec(&[c + z, 2 * n], fused);
        let hidden = self.hidden_act.forward(&self.hidden.forward(&fused));
        let out = self.readout.forward(&hidden).into_data();
        Ok(PairScores { positive: out[..n].to_vec(), negative: out[n..].to_vec() })
    }

    pub fn backward(&mut self, d_positive: &[T], d_negative: &[T]) -> PairGrads<T> {
        let n = d_positive.len();
        let mut d_out = d_positive.to_vec();
        d_out.extend_from_slice(d_negative);
        let d_hidden = self.readout.backward(&Tensor::from_vec(&[1, 2 * n], d_out));
        let d_fused = self.hidden.backward(&self.hidden_act.backward(&d_hidden));
        let shape = self.conv_shape.clone();
        let c = shape[0];
        let area = shape[2] * shape[3];
        let inv_area = T::from_f64(1.0 / area as f64);
        let z = self.embed_dim;
        let df = d_fused.data();
        let mut d_conv = vec![T::zero(); c * n * area];
        for ch in 0..c {
            for b in 0..n {
                let g = (df[ch * 2 * n + b] + df[ch * 2 * n + n + b]) * inv_area;
                d_conv[(ch * n + b) * area..(ch * n + b + 1) * area].iter_mut().for_each(|v| *v = g);
            }
        }
        let mut d_pos = vec![T::zero(); z * n];
        let mut d_neg = vec![T::zero(); z * n];
        for j in 0..z {
            let row = &df[(c + j) * 2 * n..(c + j + 1) * 2 * n];
            d_pos[j * n..(j + 1) * n].copy_from_slice(&row[..n]);
            d_neg[j * n..(j + 1) * n].copy_from_slice(&row[n..]);
        }
        let mut d = Tensor::from_vec(&shape, d_conv);
        for i in (0..self.convs.len()).rev() {
            let da = self.acts[i].backward(&d);
            d = self.convs[i].backward(&da, true).expect("input gradient requested");
        }
        PairGrads {
            local_map: d,
            positive_embedding: Tensor::from_vec(&[z, n], d_pos),
            negative_embedding: Tensor::from_vec(&[z, n], d_neg),
        }
    }
}

impl<T: Float> Parameterized<T> for GlobalDiscriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.convs.iter().flat_map(|c| c.params()).collect();
        out.extend(self.hidden.params());
        out.extend(self.readout.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.convs.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.extend(self.hidden.params_mut());
        out.extend(self.readout.params_mut());
        out
    }
}

/// Local discriminator: concatenates each location of the local map with a
/// broadcast embedding and applies 1x1 convolutions (192, 512, 512 filters)
/// plus a scalar readout, giving one score per location.
///
/// The first 1x1 layer is split into a map part and an embedding part so the
/// map projection is shared between matched and mismatched pairs.
#[derive(Clone, Debug)]
pub struct LocalDiscriminator<T> {
    map_proj: Dense<T>,
    embed_weight: Param<T>,
    act1: LeakyRelu,
    conv2: Dense<T>,
    act2: LeakyRelu,
    conv3: Dense<T>,
    act3: LeakyRelu,
    readout: Dense<T>,
    embed_dim: usize,
    cache: Option<(Tensor<T>, Tensor<T>, usize, usize)>,
}

impl<T: Float> LocalDiscriminator<T> {
    pub fn new<R: Rng>(embed_dim: usize, rng: &mut R) -> Self {
        let [f1, f2, f3] = LOCAL_FILTERS;
        let fan_in = LOCAL_CHANNELS + embed_dim;
        let mut map_proj = Dense::new("local.conv1_map", LOCAL_CHANNELS, f1, leaky_gain(), rng);
        // fan-in of the fused layer covers both halves of the concatenation
        let rescale = T::from_f64((LOCAL_CHANNELS as f64 / fan_in as f64).sqrt());
        map_proj.weight.value.iter_mut().for_each(|w| *w *= rescale);
        Self {
            map_proj,
            embed_weight: Param::gaussian("local.conv1_embedding.weight", &[f1, embed_dim], fan_in, leaky_gain(), rng),
            act1: LeakyRelu::default(),
            conv2: Dense::new("local.conv2", f1, f2, leaky_gain(), rng),
            act2: LeakyRelu::default(),
            conv3: Dense::new("local.conv3", f2, f3, leaky_gain(), rng),
            act3: LeakyRelu::default(),
            readout: Dense::new("local.readout", f3, 1, 1.0, rng),
            embed_dim,
            cache: None,
        }
    }

    /// Scores are laid out sample-major: index `n * regions + location`.
    pub fn score_pairs(
        &mut self,
        local_map: &Tensor<T>,
        positive: &Tensor<T>,
        negative: &Tensor<T>,
    ) -> Result<PairScores<T>> {
        let n = check_pair_inputs(local_map, positive, negative, self.embed_dim)?;
        let regions = local_map.dim(2) * local_map.dim(3);
        let cols = n * regions;
        let flat = local_map.clone().reshape(&[LOCAL_CHANNELS, cols]);
        let mapped = self.map_proj.forward(&flat);
        let f1 = LOCAL_FILTERS[0];
        let z = self.embed_dim;
        let w = Mat::new(&self.embed_weight.value, f1, z);
        let mut ez_pos = vec![T::zero(); f1 * n];
        let mut ez_neg = vec![T::zero(); f1 * n];
        matmul(w, Mat::new(positive.data(), z, n), &mut ez_pos, T::zero());
        matmul(w, Mat::new(negative.data(), z, n), &mut ez_neg, T::zero());
        let mut pre = vec![T::zero(); f1 * 2 * cols];
        for o in 0..f1 {
            let src = &mapped.data()[o * cols..(o + 1) * cols];
            let row = &mut pre[o * 2 * cols..(o + 1) * 2 * cols];
            for b in 0..n {
                let (ep, en) = (ez_pos[o * n + b], ez_neg[o * n + b]);
                for l in 0..regions {
                    let m = src[b * regions + l];
                    row[b * regions + l] = m + ep;
                    row[cols + b * regions + l] = m + en;
                }
            }
        }
        let pre = Tensor::from_vec(&[f1, 2 * cols], pre);
        let h = self.act1.forward(&pre);
        let h = self.act2.forward(&self.conv2.forward(&h));
        let h = self.act3.forward(&self.conv3.forward(&h));
        let out = self.readout.forward(&h).into_data();
        self.cache = Some((positive.clone(), negative.clone(), n, regions));
        Ok(PairScores { positive: out[..cols].to_vec(), negative: out[cols..].to_vec() })
    }

    pub fn backward(&mut self, d_positive: &[T], d_negative: &[T]) -> PairGrads<T> {
        let (positive, negative, n, regions) = self.cache.clone().expect("local backward before forward");
        let cols = n * regions;
        let mut d_out = d_positive.to_vec();
        d_out.extend_from_slice(d_negative);
        let d = self.readout.backward(&Tensor::from_vec(&[1, 2 * cols], d_out));
        let d = self.conv3.backward(&self.act3.backward(&d));
        let d = self.conv2.backward(&self.act2.backward(&d));
        let d_pre = self.act1.backward(&d);
        let f1 = LOCAL_FILTERS[0];
        let z = self.embed_dim;
        let dp = d_pre.data();
        let mut d_mapped = vec![T::zero(); f1 * cols];
        let mut dez_pos = vec![T::zero(); f1 * n];
        let mut dez_neg = vec![T::zero(); f1 * n];
        for o in 0..f1 {
            let row = &dp[o * 2 * cols..(o + 1) * 2 * cols];
            for b in 0..n {
                let (mut sp, mut sn) = (T::zero(), T::zero());
                for l in 0..regions {
                    let (gp, gn) = (row[b * regions + l], row[cols + b * regions + l]);
                    d_mapped[o * cols + b * regions + l] = gp + gn;
                    sp += gp;
                    sn += gn;
                }
                dez_pos[o * n + b] = sp;
                dez_neg[o * n + b] = sn;
            }
        }
        let d_flat = self.map_proj.backward(&Tensor::from_vec(&[f1, cols], d_mapped));
        matmul(
            Mat::new(&dez_pos, f1, n),
            Mat::new(positive.data(), z, n).t(),
            &mut self.embed_weight.grad,
            T::one(),
        );
        matmul(
            Mat::new(&dez_neg, f1, n),
            Mat::new(negative.data(), z, n).t(),
            &mut self.embed_weight.grad,
            T::one(),
        );
        let w = Mat::new(&self.embed_weight.value, f1, z).t();
        let mut d_pos = vec![T::zero(); z * n];
        let mut d_neg = vec![T::zero(); z * n];
        matmul(w, Mat::new(&dez_pos, f1, n), &mut d_pos, T::zero());
        matmul(w, Mat::new(&dez_neg, f1, n), &mut d_neg, T::zero());
        let side = (regions as f64).sqrt() as usize;
        PairGrads {
            local_map: d_flat.reshape(&[LOCAL_CHANNELS, n, side, regions / side]),
            positive_embedding: Tensor::from_vec(&[z, n], d_pos),
            negative_embedding: Tensor::from_vec(&[z, n], d_neg),
        }
    }
}

impl<T: Float> Parameterized<T> for LocalDiscriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = self.map_proj.params();
        out.push(&self.embed_weight);
        out.extend(self.conv2.params());
        out.extend(self.conv3.params());
        out.extend(self.readout.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = self.map_proj.params_mut();
        out.push(&mut self.embed_weight);
        out.extend(self.conv2.params_mut());
        out.extend(self.conv3.params_mut());
        out.extend(self.readout.params_mut());
        out
    }
}

/// Prior discriminator `d(v)`: three fully connected layers (1000, 200, 1)
/// and a sigmoid, clamped into `[PROB_EPS, 1 - PROB_EPS]`.
#[derive(Clone, Debug)]
pub struct PriorDiscriminator<T> {
    layers: Vec<Dense<T>>,
    acts: Vec<LeakyRelu>,
    embed_dim: usize,
}

impl<T: Float> PriorDiscriminator<T> {
    pub fn new<R: Rng>(embed_dim: usize, rng: &mut R) -> Self {
        let mut inputs = embed_dim;
        let layers = PRIOR_UNITS
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let gain = if i + 1 < PRIOR_UNITS.len() { leaky_gain() } else { 1.0 };
                let l = Dense::new(&format!("prior.fc{}", i + 1), inputs, u, gain, rng);
                inputs = u;
                l
            })
            .collect();
        Self { layers, acts: vec![LeakyRelu::default(); 2], embed_dim }
    }

    /// Zero every weight and bias; the output is then exactly 0.5.
    pub fn zero_out(&mut self) {
        for p in self.params_mut() {
            p.value.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Pre-sigmoid outputs for each column of `x` (`[Z, M]`).
    pub fn logits(&mut self, x: &Tensor<T>) -> Result<Vec<T>> {
        if x.shape().len() != 2 || x.dim(0) != self.embed_dim {
            return Err(Error::shape(format!(
                "prior discriminator expects [{}, M], got {:?}",
                self.embed_dim,
                x.shape()
            )));
        }
        let mut h = x.clone();
        for i in 0..self.layers.len() {
            h = self.layers[i].forward(&h);
            if i < self.acts.len() {
                h = self.acts[i].forward(&h);
            }
        }
        Ok(h.into_data())
    }

    /// Probability that each column of `x` was drawn from the prior, clamped
    /// to `[PROB_EPS, 1 - PROB_EPS]`.
    pub fn probability(&mut self, x: &Tensor<T>) -> Result<Vec<T>> {
        let eps = T::from_f64(PROB_EPS);
        Ok(self.logits(x)?.into_iter().map(|a| sigmoid(a).max(eps).min(T::one() - eps)).collect())
    }

    /// Gradient with respect to the input, given gradients on the logits of
    /// the last forward pass.
    pub fn backward(&mut self, d_logits: &[T]) -> Tensor<T> {
        let mut grad = Tensor::from_vec(&[1, d_logits.len()], d_logits.to_vec());
        for i in (0..self.layers.len()).rev() {
            if i < self.acts.len() {
                grad = self.acts[i].backward(&grad);
            }
            grad = self.layers[i].backward(&grad);
        }
        grad
    }
}

pub(crate) fn sigmoid<T: Float>(a: T) -> T {
    T::one() / (T::one() + (-a).exp())
}

impl<T: Float> Parameterized<T> for PriorDiscriminator<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
