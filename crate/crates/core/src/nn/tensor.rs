use super::Float;

/// Dense n-d buffer. Feature maps use channel-first `[C, N, H, W]` layout and
/// feature vectors use `[F, N]`, so every layer sees its channel axis as rows
/// of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "buffer of {} values cannot have shape {shape:?}",
            data.len()
        );
        Self { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dim(&self, axis: usize) -> usize {
        self.shape[axis]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Size of everything after the leading (channel) axis.
    pub fn inner(&self) -> usize {
        self.data.len() / self.shape[0].max(1)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Self {
        assert_eq!(shape.iter().product::<usize>(), self.data.len());
        self.shape = shape.to_vec();
        self
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape);
        self.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a += b);
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Concatenate `[F, a]` and `[F, b]` along the column axis.
    pub fn concat_cols(left: &Self, right: &Self) -> Self {
        assert_eq!(left.shape.len(), 2);
        assert_eq!(right.shape.len(), 2);
        assert_eq!(left.shape[0], right.shape[0]);
        let rows = left.shape[0];
        let (a, b) = (left.shape[1], right.shape[1]);
        let mut data = Vec::with_capacity(rows * (a + b));
        for r in 0..rows {
            data.extend_from_slice(&left.data[r * a..(r + 1) * a]);
            data.extend_from_slice(&right.data[r * b..(r + 1) * b]);
        }
        Self::from_vec(&[rows, a + b], data)
    }

    /// Columns `[start, end)` of a `[F, M]` matrix.
    pub fn slice_cols(&self, start: usize, end: usize) -> Self {
        assert_eq!(self.shape.len(), 2);
        let (rows, cols) = (self.shape[0], self.shape[1]);
        assert!(start <= end && end <= cols);
        let width = end - start;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * cols + start..r * cols + end]);
        }
        Self::from_vec(&[rows, width], data)
    }

    /// Rotate columns of a `[F, N]` matrix left by `shift`: column `i` of the
    /// result is column `(i + shift) % N` of `self`.
    pub fn roll_cols(&self, shift: usize) -> Self {
        assert_eq!(self.shape.len(), 2);
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let mut data = vec![T::zero(); rows * cols];
        for r in 0..rows {
            for i in 0..cols {
                data[r * cols + i] = self.data[r * cols + (i + shift) % cols];
            }
        }
        Self::from_vec(&self.shape, data)
    }

    /// Inverse of [`Tensor::roll_cols`].
    pub fn unroll_cols(&self, shift: usize) -> Self {
        let cols = self.shape[1];
        self.roll_cols((cols - shift % cols) % cols)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.as_f64()).collect()
    }
}
