use rand::Rng;

use super::{matmul, Float, Mat, Param, Parameterized, Tensor};

/// Forward-pass mode. Batch-norm statistics update only in `Train`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const LEAKY_SLOPE: f64 = 0.2;

/// Fan-in gain for leaky-rectifier layers.
pub fn leaky_gain() -> f64 {
    (2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE)).sqrt()
}

/// Fully connected layer on `[in, M]` inputs; doubles as a 1x1 convolution
/// on channel-first feature maps.
#[derive(Clone, Debug)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Tensor<T>>,
}

impl<T: Float> Dense<T> {
    pub fn new<R: Rng>(name: &str, inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        Self {
            weight: Param::gaussian(format!("{name}.weight"), &[outputs, inputs], inputs, gain, rng),
            bias: Param::filled(format!("{name}.bias"), &[outputs], T::zero()),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let y = self.apply(x);
        self.input = Some(x.clone());
        y
    }

    /// Forward without caching the input.
    pub fn apply(&self, x: &Tensor<T>) -> Tensor<T> {
        let (i, o) = (self.inputs(), self.outputs());
        assert_eq!(x.dim(0), i, "dense layer {} expects {i} input rows", self.weight.name);
        let m = x.inner();
        let mut out = vec![T::zero(); o * m];
        for (r, row) in out.chunks_mut(m.max(1)).enumerate().take(o) {
            row.iter_mut().for_each(|v| *v = self.bias.value[r]);
        }
        matmul(Mat::new(&self.weight.value, o, i), Mat::new(x.data(), i, m), &mut out, T::one());
        let mut shape = x.shape().to_vec();
        shape[0] = o;
        Tensor::from_vec(&shape, out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let x = self.input.as_ref().expect("dense backward before forward");
        let (i, o) = (self.inputs(), self.outputs());
        let m = x.inner();
        matmul(Mat::new(dy.data(), o, m), Mat::new(x.data(), i, m).t(), &mut self.weight.grad, T::one());
        for r in 0..o {
            self.bias.grad[r] += dy.data()[r * m..(r + 1) * m].iter().copied().sum::<T>();
        }
        let mut dx = vec![T::zero(); i * m];
        matmul(Mat::new(&self.weight.value, o, i).t(), Mat::new(dy.data(), o, m), &mut dx, T::zero());
        Tensor::from_vec(x.shape(), dx)
    }
}

impl<T: Float> Parameterized<T> for Dense<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
struct ConvCache<T> {
    cols: Vec<T>,
    input_shape: Vec<usize>,
    out_h: usize,
    out_w: usize,
}

/// Square-kernel 2-D convolution over `[C, N, H, W]` maps, lowered to a
/// single GEMM per call via im2col.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<ConvCache<T>>,
}

impl<T: Float> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel * kernel;
        Self {
            weight: Param::gaussian(format!("{name}.weight"), &[out_ch, in_ch, kernel, kernel], fan_in, gain, rng),
            bias: Param::filled(format!("{name}.bias"), &[out_ch], T::zero()),
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel;
        ((h + 2 * self.pad - k) / self.stride + 1, (w + 2 * self.pad - k) / self.stride + 1)
    }

    fn im2col(&self, x: &Tensor<T>, oh: usize, ow: usize) -> Vec<T> {
        let (c, n, h, w) = (x.dim(0), x.dim(1), x.dim(2), x.dim(3));
        let k = self.kernel;
        let cols_per_row = n * oh * ow;
        let mut cols = vec![T::zero(); c * k * k * cols_per_row];
        let src = x.data();
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ch * k + ki) * k + kj;
                    let dst = &mut cols[row * cols_per_row..(row + 1) * cols_per_row];
                    for b in 0..n {
                        let plane = &src[(ch * n + b) * h * w..(ch * n + b + 1) * h * w];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                            let out_row = &mut dst[(b * oh + oy) * ow..(b * oh + oy + 1) * ow];
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let line = &plane[iy as usize * w..(iy as usize + 1) * w];
                            for (ox, slot) in out_row.iter_mut().enumerate() {
                                let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *slot = line[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[T], shape: &[usize], oh: usize, ow: usize) -> Tensor<T> {
        let (c, n, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let k = self.kernel;
        let cols_per_row = n * oh * ow;
        let mut dx = vec![T::zero(); c * n * h * w];
        for ch in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ch * k + ki) * k + kj;
                    let src = &dcols[row * cols_per_row..(row + 1) * cols_per_row];
                    for b in 0..n {
                        let plane = &mut dx[(ch * n + b) * h * w..(ch * n + b + 1) * h * w];
                        for oy in 0..oh {
                            let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let in_row = &src[(b * oh + oy) * ow..(b * oh + oy + 1) * ow];
                            let line = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                            for (ox, &g) in in_row.iter().enumerate() {
                                let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    line[ix as usize] += g;
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(shape, dx)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.shape().len(), 4, "conv input must be [C, N, H, W]");
        assert_eq!(x.dim(0), self.in_channels(), "conv {} channel mismatch", self.weight.name);
        let (n, h, w) = (x.dim(1), x.dim(2), x.dim(3));
        let (oh, ow) = self.output_size(h, w);
        let cols = self.im2col(x, oh, ow);
        let o = self.out_channels();
        let ckk = self.in_channels() * self.kernel * self.kernel;
        let m = n * oh * ow;
        let mut out = vec![T::zero(); o * m];
        for (r, row) in out.chunks_mut(m).enumerate() {
            row.iter_mut().for_each(|v| *v = self.bias.value[r]);
        }
        matmul(Mat::new(&self.weight.value, o, ckk), Mat::new(&cols, ckk, m), &mut out, T::one());
        self.cache = Some(ConvCache { cols, input_shape: x.shape().to_vec(), out_h: oh, out_w: ow });
        Tensor::from_vec(&[o, n, oh, ow], out)
    }

    /// Accumulate parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, dy: &Tensor<T>, want_input_grad: bool) -> Option<Tensor<T>> {
        let cache = self.cache.as_ref().expect("conv backward before forward");
        let o = self.out_channels();
        let ckk = self.in_channels() * self.kernel * self.kernel;
        let m = cache.input_shape[1] * cache.out_h * cache.out_w;
        assert_eq!(dy.len(), o * m);
        matmul(Mat::new(dy.data(), o, m), Mat::new(&cache.cols, ckk, m).t(), &mut self.weight.grad, T::one());
        for r in 0..o {
            self.bias.grad[r] += dy.data()[r * m..(r + 1) * m].iter().copied().sum::<T>();
        }
        if !want_input_grad {
            return None;
        }
        let mut dcols = vec![T::zero(); ckk * m];
        matmul(Mat::new(&self.weight.value, o, ckk).t(), Mat::new(dy.data(), o, m), &mut dcols, T::zero());
        Some(self.col2im(&dcols, &cache.input_shape, cache.out_h, cache.out_w))
    }
}

impl<T: Float> Parameterized<T> for Conv2d<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Debug)]
struct NormCache<T> {
    normalized: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

/// Batch normalization over the leading (channel) axis.
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    momentum: f64,
    eps: f64,
    cache: Option<NormCache<T>>,
}

impl<T: Float> BatchNorm<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[channels], T::one()),
            beta: Param::filled(format!("{name}.beta"), &[channels], T::zero()),
            running_mean: Param::buffer(format!("{name}.running_mean"), &[channels], T::zero()),
            running_var: Param::buffer(format!("{name}.running_var"), &[channels], T::one()),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let c = self.gamma.len();
        assert_eq!(x.dim(0), c);
        let m = x.inner();
        let eps = T::from_f64(self.eps);
        let mut normalized = vec![T::zero(); c * m];
        let mut inv_std = vec![T::zero(); c];
        let mut out = vec![T::zero(); c * m];
        let mm = T::from_f64(m as f64);
        let momentum = T::from_f64(self.momentum);
        for ch in 0..c {
            let row = &x.data()[ch * m..(ch + 1) * m];
            let (mean, var) = match mode {
                Mode::Train => {
                    let mean = row.iter().copied().sum::<T>() / mm;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mm;
                    let unbiased = if m > 1 { var * mm / (mm - T::one()) } else { var };
                    self.running_mean.value[ch] =
                        (T::one() - momentum) * self.running_mean.value[ch] + momentum * mean;
                    self.running_var.value[ch] =
                        (T::one() - momentum) * self.running_var.value[ch] + momentum * unbiased;
                    (mean, var)
                }
                Mode::Eval => (self.running_mean.value[ch], self.running_var.value[ch]),
            };
            let s = T::one() / (var + eps).sqrt();
            inv_std[ch] = s;
            let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
            for j in 0..m {
                let xh = (row[j] - mean) * s;
                normalized[ch * m + j] = xh;
                out[ch * m + j] = g * xh + b;
            }
        }
        self.cache = Some(NormCache { normalized, inv_std, mode });
        Tensor::from_vec(x.shape(), out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Tensor<T> {
        let cache = self.cache.as_ref().expect("batch-norm backward before forward");
        let c = self.gamma.len();
        let m = dy.inner();
        let mm = T::from_f64(m as f64);
        let mut dx = vec![T::zero(); c * m];
        for ch in 0..c {
            let g = &dy.data()[ch * m..(ch + 1) * m];
            let xh = &cache.normalized[ch * m..(ch + 1) * m];
            let sum_g: T = g.iter().copied().sum();
            let sum_gx: T = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            self.gamma.grad[ch] += sum_gx;
            self.beta.grad[ch] += sum_g;
            let scale = self.gamma.value[ch] * cache.inv_std[ch];
            let out = &mut dx[ch * m..(ch + 1) * m];
            match cache.mode {
                Mode::Train => {
                    for j in 0..m {
                        out[j] = scale / mm * (mm * g[j] - sum_g - xh[j] * sum_gx);
                    }
                }
                Mode::Eval => {
                    for j in 0..m {
                        out[j] = scale * g[j];
                    }
                }
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }
}

impl<T: Float> Parameterized<T> for BatchNorm<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta, &self.running_mean, &self.running_var]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta, &mut self.running_mean, &mut self.running_var]
    }
}

#[derive(Clone, Debug, Default)]
pub struct LeakyRelu {
    positive: Vec<bool>,
}

impl LeakyRelu {
    pub fn forward<T: Float>(&mut self, x: &Tensor<T>) -> Tensor<T> {
        let slope = T::from_f64(LEAKY_SLOPE);
        self.positive = x.data().iter().map(|&v| v > T::zero()).collect();
        x.map(|v| if v > T::zero() { v } else { v * slope })
    }

    pub fn backward<T: Float>(&self, dy: &Tensor<T>) -> Tensor<T> {
        let slope = T::from_f64(LEAKY_SLOPE);
        assert_eq!(dy.len(), self.positive.len());
        let data = dy.data().iter().zip(&self.positive).map(|(&g, &p)| if p { g } else { g * slope }).collect();
        Tensor::from_vec(dy.shape(), data)
    }
}
