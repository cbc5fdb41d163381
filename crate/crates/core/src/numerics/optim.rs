use serde::{Deserialize, Serialize};

use super::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Langevin temperature. When set, every update receives Gaussian noise
    /// with variance `2 * lr * temperature`.
    pub langevin_temperature: Option<f32>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, langevin_temperature: None }
    }
}

impl AdamConfig {
    /// Standard deviation of the Langevin perturbation, if enabled.
    pub fn noise_std(&self) -> Option<f32> {
        self.langevin_temperature.map(|t| (2.0 * self.lr * t).sqrt())
    }
}

/// Default temperature of the Langevin variant when it is switched on.
pub const DEFAULT_LANGEVIN_TEMPERATURE: f32 = 1e-8;

/// Adam moments for a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, param_lens: impl IntoIterator<Item = usize>) -> Self {
        let (first, second) = param_lens.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { config, step: 0, first, second }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &[f32] {
        &self.first[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f32] {
        &self.second[index]
    }

    /// Advances the step counter. Call once per optimizer step, before the
    /// per-parameter updates.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Bias-corrected Adam update of one parameter tensor.
    ///
    /// Entries with `keep[i] == false` get a zeroed gradient before the
    /// moment update and are pinned to exactly `0.0` afterwards.
    pub fn update(
        &mut self,
        index: usize,
        param: &mut [f32],
        grad: &[f32],
        keep: Option<&[bool]>,
        noise: Option<&mut RngStream>,
    ) {
        assert!(self.step > 0, "begin_step must be called before update");
        let AdamConfig { lr, beta1, beta2, eps, .. } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let m = &mut self.first[index];
        let v = &mut self.second[index];
        assert_eq!(m.len(), param.len(), "optimizer state does not match parameter {index}");
        let noise_std = self.config.noise_std();
        let mut noise = noise.filter(|_| noise_std.is_some());
        for i in 0..param.len() {
            let live = keep.is_none_or(|k| k[i]);
            if !live {
                m[i] = 0.0;
                v[i] = 0.0;
                param[i] = 0.0;
                continue;
            }
            let g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            if let (Some(rng), Some(std)) = (noise.as_deref_mut(), noise_std) {
                param[i] += rng.normal(std);
            }
        }
    }
}
