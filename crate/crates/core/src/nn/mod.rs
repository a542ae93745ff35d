//! Minimal CPU neural-network toolkit: channel-first tensors, GEMM-backed
//! layers with hand-written backward passes, and an Adam optimizer.

mod adam;
mod float;
mod layers;
mod param;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use float::{matmul, Float, Mat};
pub use layers::{leaky_gain, BatchNorm, Conv2d, Dense, LeakyRelu, Mode, LEAKY_SLOPE};
pub use param::{Param, Parameterized};
pub use tensor::Tensor;
