use rand::Rng;

use crate::nn::{leaky_gain, BatchNorm, Conv2d, Dense, Float, LeakyRelu, Mode, Param, Parameterized, Tensor};
use crate::{Error, Result};

/// Input side length the encoder is built for.
pub const INPUT_SIZE: usize = 64;
pub const INPUT_CHANNELS: usize = 3;
pub const ENCODER_FILTERS: [usize; 4] = [64, 128, 256, 512];
pub const ENCODER_KERNEL: usize = 4;
/// Index of the block whose output serves as the local feature map.
pub const LOCAL_BLOCK: usize = 2;
pub const LOCAL_CHANNELS: usize = 256;
pub const LOCAL_SIDE: usize = 8;
/// Number of local regions (one per location of the local map).
pub const LOCAL_REGIONS: usize = LOCAL_SIDE * LOCAL_SIDE;

#[derive(Clone, Debug)]
struct ConvBlock<T> {
    conv: Conv2d<T>,
    norm: BatchNorm<T>,
    act: LeakyRelu,
}

impl<T: Float> ConvBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Tensor<T> {
        let h = self.conv.forward(x);
        let h = self.norm.forward(&h, mode);
        self.act.forward(&h)
    }

    fn backward(&mut self, dy: &Tensor<T>, want_input_grad: bool) -> Option<Tensor<T>> {
        let d = self.act.backward(dy);
        let d = self.norm.backward(&d);
        self.conv.backward(&d, want_input_grad)
    }
}

/// Output of one encoder pass.
#[derive(Clone, Debug)]
pub struct Encoded<T> {
    /// `[Z, N]`
    pub embedding: Tensor<T>,
    /// `[256, N, 8, 8]`, the third block's activations.
    pub local_map: Tensor<T>,
}

/// Four stride-2 4x4 convolution blocks (conv, batch norm, leaky rectifier)
/// followed by a linear projection of the flattened 4x4x512 map to `Z`.
#[derive(Clone, Debug)]
pub struct Encoder<T> {
    blocks: Vec<ConvBlock<T>>,
    projection: Dense<T>,
    embed_dim: usize,
    batch: usize,
    shapes: Vec<Vec<usize>>,
}

impl<T: Float> Encoder<T> {
    pub fn new<R: Rng>(embed_dim: usize, rng: &mut R) -> Self {
        let mut in_ch = INPUT_CHANNELS;
        let blocks = ENCODER_FILTERS
            .iter()
            .enumerate()
            .map(|(i, &out_ch)| {
                let name = format!("encoder.conv{}", i + 1);
                let block = ConvBlock {
                    conv: Conv2d::new(&name, in_ch, out_ch, ENCODER_KERNEL, 2, 1, leaky_gain(), rng),
                    norm: BatchNorm::new(&format!("encoder.bn{}", i + 1), out_ch),
                    act: LeakyRelu::default(),
                };
                in_ch = out_ch;
                block
            })
            .collect();
        let flat = ENCODER_FILTERS[3] * 4 * 4;
        Self {
            blocks,
            projection: Dense::new("encoder.projection", flat, embed_dim, 1.0, rng),
            embed_dim,
            batch: 0,
            shapes: Vec::new(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Shapes `[C, N, H, W]` of each block's output in the last pass.
    pub fn block_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn encode(&mut self, images: &Tensor<T>, mode: Mode) -> Result<Encoded<T>> {
        let s = images.shape();
        if s.len() != 4 || s[0] != INPUT_CHANNELS || s[2] != INPUT_SIZE || s[3] != INPUT_SIZE || s[1] == 0 {
            return Err(Error::shape(format!(
                "encoder expects [3, N, 64, 64] with N >= 1, got {s:?}"
            )));
        }
        let n = s[1];
        self.batch = n;
        self.shapes.clear();
        let mut h = images.clone();
        let mut local_map = None;
        for (i, block) in self.blocks.iter_mut().enumerate() {
            h = block.forward(&h, mode);
            self.shapes.push(h.shape().to_vec());
            if i == LOCAL_BLOCK {
                local_map = Some(h.clone());
            }
        }
        let flat = flatten_per_sample(&h);
        let embedding = self.projection.forward(&flat);
        Ok(Encoded { embedding, local_map: local_map.expect("encoder has a local block") })
    }

    /// Backpropagate from gradients on the embedding and (optionally) the
    /// local map, accumulating parameter gradients.
    pub fn backward(&mut self, d_embedding: &Tensor<T>, d_local: Option<&Tensor<T>>) {
        let d_flat = self.projection.backward(d_embedding);
        let last = self.shapes.last().expect("encoder backward before forward").clone();
        let mut d = unflatten_per_sample(&d_flat, &last);
        for i in (0..self.blocks.len()).rev() {
            if i == LOCAL_BLOCK {
                if let Some(extra) = d_local {
                    d.add_assign(extra);
                }
            }
            match self.blocks[i].backward(&d, i > 0) {
                Some(next) => d = next,
                None => break,
            }
        }
    }
}

/// `[C, N, H, W]` to `[C*H*W, N]` with per-sample features ordered (c, h, w).
fn flatten_per_sample<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let (c, n) = (x.dim(0), x.dim(1));
    let hw = x.dim(2) * x.dim(3);
    let mut out = vec![T::zero(); x.len()];
    let src = x.data();
    for ch in 0..c {
        for b in 0..n {
            for s in 0..hw {
                out[(ch * hw + s) * n + b] = src[(ch * n + b) * hw + s];
            }
        }
    }
    Tensor::from_vec(&[c * hw, n], out)
}

fn unflatten_per_sample<T: Float>(x: &Tensor<T>, shape: &[usize]) -> Tensor<T> {
    let (c, n) = (shape[0], shape[1]);
    let hw = shape[2] * shape[3];
    let mut out = vec![T::zero(); x.len()];
    let src = x.data();
    for ch in 0..c {
        for b in 0..n {
            for s in 0..hw {
                out[(ch * n + b) * hw + s] = src[(ch * hw + s) * n + b];
            }
        }
    }
    Tensor::from_vec(shape, out)
}

impl<T: Float> Parameterized<T> for Encoder<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.conv.params());
            out.extend(b.norm.params());
        }
        out.extend(self.projection.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.extend(b.conv.params_mut());
            out.extend(b.norm.params_mut());
        }
        out.extend(self.projection.params_mut());
        out
    }
}
