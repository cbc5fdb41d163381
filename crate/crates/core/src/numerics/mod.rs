//! Tensor engine: reverse-mode differentiation, convolution, resampling,
//! normalization and the Adam optimizer.

mod kernels;
pub mod optim;
pub mod resample;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use optim::{AdamConfig, OptimizerState};
pub use resample::{resample, ResampleMode};
pub use rng::RngStream;
pub use tape::{sigmoid, Activation, Gradients, NormKind, Tape, Var};
pub use tensor::Tensor;
