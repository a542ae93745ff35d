use serde::{Deserialize, Serialize};

use crate::nn::{Float, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    pub fn is_abnormal(self) -> bool {
        self == Label::Abnormal
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Abnormal => "abnormal",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(Label::Normal),
            "abnormal" => Ok(Label::Abnormal),
            other => Err(Error::config(format!("unknown label {other:?}"))),
        }
    }
}

/// Three-channel image stored channel-planar (`[3, H, W]`), values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != Self::CHANNELS * height * width {
            return Err(Error::shape(format!(
                "{} values cannot form a 3x{height}x{width} image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::contract(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self { height, width, data: vec![value.clamp(0.0, 1.0); Self::CHANNELS * height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Rec. 601 luma.
    pub fn grayscale(&self) -> Vec<f64> {
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        (0..self.height * self.width)
            .map(|i| 0.299 * r[i] as f64 + 0.587 * g[i] as f64 + 0.114 * b[i] as f64)
            .collect()
    }
}

/// One image with its patient id and class label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFrame {
    /// Stable identifier (file stem or synthetic index).
    pub id: String,
    pub pixels: Image,
    pub patient_id: u32,
    pub label: Label,
}

/// Which partition a set of frames came from. Parameter-updating operations
/// only accept the two training partitions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    TrainNormal,
    TrainAbnormal,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameSet {
    pub partition: Partition,
    pub frames: Vec<LabeledFrame>,
}

impl FrameSet {
    pub fn new(partition: Partition, frames: Vec<LabeledFrame>) -> Self {
        Self { partition, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.frames.iter().filter(|f| f.label == label).count()
    }

    pub fn patients(&self) -> std::collections::BTreeSet<u32> {
        self.frames.iter().map(|f| f.patient_id).collect()
    }

    pub fn require(&self, allowed: &[Partition], op: &str) -> Result<()> {
        if allowed.contains(&self.partition) {
            Ok(())
        } else {
            Err(Error::contract(format!("{op} cannot consume {:?} frames", self.partition)))
        }
    }
}

/// Stack 64x64 frames into a `[3, N, H, W]` batch.
pub fn batch_tensor<T: Float>(frames: &[&Image]) -> Result<Tensor<T>> {
    let first = frames.first().ok_or_else(|| Error::contract("empty image batch"))?;
    let (h, w) = (first.height(), first.width());
    let n = frames.len();
    let plane = h * w;
    let mut data = vec![T::zero(); Image::CHANNELS * n * plane];
    for (b, img) in frames.iter().enumerate() {
        if img.height() != h || img.width() != w {
            return Err(Error::shape("images in a batch must share a size"));
        }
        for c in 0..Image::CHANNELS {
            let dst = &mut data[(c * n + b) * plane..(c * n + b + 1) * plane];
            for (d, &s) in dst.iter_mut().zip(img.channel(c)) {
                *d = T::from_f64(s as f64);
            }
        }
    }
    Ok(Tensor::from_vec(&[Image::CHANNELS, n, h, w], data))
}
