use crate::numerics::{RngStream, Tensor};

/// Upper end of the uniform code distribution.
pub const CODE_SCALE: f32 = 0.1;

/// Fixed random input `z` of a prior network.
#[derive(Clone, Debug, PartialEq)]
pub struct InputCode {
    tensor: Tensor,
    seed: u64,
    /// Std of the fresh Gaussian perturbation added at every fit iteration.
    pub jitter_std: f32,
}

impl InputCode {
    /// Samples `z ~ U(0, 0.1)` of the given shape.
    pub fn sample(shape: [usize; 4], seed: u64) -> Self {
        let mut tensor = Tensor::zeros(shape);
        RngStream::new(seed, "input-code").fill_uniform(tensor.data_mut(), 0.0, CODE_SCALE);
        Self { tensor, seed, jitter_std: 0.0 }
    }

    pub fn with_jitter(mut self, jitter_std: f32) -> Self {
        self.jitter_std = jitter_std;
        self
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The code plus one draw of jitter, or the code itself when jitter is 0.
    pub fn perturbed(&self, rng: &mut RngStream) -> Tensor {
        if self.jitter_std == 0.0 {
            return self.tensor.clone();
        }
        let mut t = self.tensor.clone();
        for v in t.data_mut() {
            *v += rng.normal(self.jitter_std);
        }
        t
    }
}

/// Convenience wrapper over [`InputCode::sample`].
pub fn sample_input_code(shape: [usize; 4], seed: u64) -> InputCode {
    InputCode::sample(shape, seed)
}
