//! Shared inputs for the criterion benchmarks.

use lip_core::numerics::{RngStream, Tensor};

pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    RngStream::new(seed, "bench").fill_uniform(t.data_mut(), -1.0, 1.0);
    t
}
