use rand::Rng;
use rand_distr::StandardNormal;

use super::Float;

/// A named parameter tensor with its gradient accumulator.
///
/// Batch-norm running statistics are stored as non-trainable parameters so
/// that checkpoints and digests cover them without a second code path.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
    pub trainable: bool,
}

impl<T: Float> Param<T> {
    pub fn filled(name: impl Into<String>, shape: &[usize], fill: T) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            value: vec![fill; len],
            grad: vec![T::zero(); len],
            trainable: true,
        }
    }

    /// Gaussian init with standard deviation `gain / sqrt(fan_in)`.
    pub fn gaussian<R: Rng>(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let std = gain / (fan_in as f64).sqrt();
        let mut p = Self::filled(name, shape, T::zero());
        for v in &mut p.value {
            let z: f64 = rng.sample(StandardNormal);
            *v = T::from_f64(z * std);
        }
        p
    }

    pub fn buffer(name: impl Into<String>, shape: &[usize], fill: T) -> Self {
        Self { trainable: false, ..Self::filled(name, shape, fill) }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn scale_grad(&mut self, factor: T) {
        self.grad.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}.{}", self.name);
        self
    }
}

/// Anything owning parameters in a fixed, named order.
pub trait Parameterized<T: Float> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn scale_grad(&mut self, factor: T) {
        self.params_mut().into_iter().filter(|p| p.trainable).for_each(|p| p.scale_grad(factor));
    }

    fn trainable_len(&self) -> usize {
        self.params().iter().filter(|p| p.trainable).map(|p| p.len()).sum()
    }
}
