use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{resample, ResampleMode, RngStream, Tape, Tensor, Var};

use super::image::{image_dims, text_pattern};

/// Noise level used when none is configured (25 on the 8-bit scale).
pub const DEFAULT_SIGMA: f32 = 25.0 / 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InpaintPattern {
    /// Each pixel kept independently with probability `keep_prob`.
    Bernoulli { keep_prob: f64 },
    /// Pseudo-glyph strokes laid out in lines.
    Text,
    /// Explicit row-major `H x W` keep map.
    Pixels { keep: Vec<bool> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "task")]
pub enum Degradation {
    Denoise { sigma: f32 },
    Inpaint { pattern: InpaintPattern },
    SuperResolve { factor: usize },
}

impl Degradation {
    pub fn denoise() -> Self {
        Degradation::Denoise { sigma: DEFAULT_SIGMA }
    }

    pub fn inpaint(keep_prob: f64) -> Self {
        Degradation::Inpaint { pattern: InpaintPattern::Bernoulli { keep_prob } }
    }

    pub fn super_resolve(factor: usize) -> Self {
        Degradation::SuperResolve { factor }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Degradation::Denoise { .. } => "denoise",
            Degradation::Inpaint { .. } => "inpaint",
            Degradation::SuperResolve { .. } => "super_resolve",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Degradation::Denoise { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")))
            }
            Degradation::Inpaint { pattern: InpaintPattern::Bernoulli { keep_prob } }
                if !(*keep_prob > 0.0 && *keep_prob <= 1.0) =>
            {
                Err(Error::InvalidArgument(format!("keep_prob must lie in (0, 1], got {keep_prob}")))
            }
            Degradation::SuperResolve { factor: 0 } => Err(Error::InvalidArgument("SR factor must be >= 1".into())),
            _ => Ok(()),
        }
    }
}

/// The forward operator `A` as seen by the loss.
#[derive(Clone, Debug, PartialEq)]
pub enum Operator {
    Identity,
    /// Per-element binary weight over the full `(1, C, H, W)` image.
    PixelMask(Arc<Vec<f32>>),
    Downsample { factor: usize },
}

/// Everything fitting is allowed to see: the degraded image and the operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Objective {
    observed: Tensor,
    operator: Operator,
    /// Shape of the restored image, `(1, C, H, W)`.
    output_shape: [usize; 4],
}

impl Objective {
    pub fn new(observed: Tensor, operator: Operator, output_shape: [usize; 4]) -> Result<Self> {
        let expected = match &operator {
            Operator::Downsample { factor } => {
                let [n, c, h, w] = output_shape;
                if *factor == 0 || h % factor != 0 || w % factor != 0 {
                    return Err(Error::Shape(format!("{h}x{w} is not divisible by SR factor {factor}")));
                }
                [n, c, h / factor, w / factor]
            }
            Operator::PixelMask(weight) => {
                if weight.len() != output_shape.iter().product::<usize>() {
                    return Err(Error::Shape("pixel mask does not cover the image".into()));
                }
                if weight.iter().all(|&v| v == 0.0) {
                    return Err(Error::InvalidArgument("pixel mask keeps no pixels".into()));
                }
                output_shape
            }
            Operator::Identity => output_shape,
        };
        if observed.shape() != expected {
            return Err(Error::Shape(format!("observation has shape {:?}, expected {:?}", observed.shape(), expected)));
        }
        Ok(Self { observed, operator, output_shape })
    }

    /// Plain MSE objective against a target image.
    pub fn plain(target: Tensor) -> Result<Self> {
        let shape = target.dims4()?;
        Self::new(target, Operator::Identity, shape)
    }

    pub fn observed(&self) -> &Tensor {
        &self.observed
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn output_shape(&self) -> [usize; 4] {
        self.output_shape
    }

    /// Records the task loss of `output` on the tape.
    pub fn loss_on_tape(&self, tape: &mut Tape, output: Var) -> Result<Var> {
        self.loss_against(tape, output, &self.observed)
    }

    /// Like [`loss_on_tape`](Self::loss_on_tape) with a replacement target
    /// of the observed shape (used by multi-image fitting).
    pub fn loss_against(&self, tape: &mut Tape, output: Var, target: &Tensor) -> Result<Var> {
        if tape.value(output).shape() != self.output_shape {
            return Err(Error::Shape(format!(
                "output has shape {:?}, task expects {:?}",
                tape.value(output).shape(),
                self.output_shape
            )));
        }
        let target = tape.constant(target.clone());
        match &self.operator {
            Operator::Identity => tape.mse(output, target, None),
            Operator::PixelMask(weight) => tape.mse(output, target, Some(weight.clone())),
            Operator::Downsample { factor } => {
                let pooled = tape.avg_pool(output, *factor)?;
                tape.mse(pooled, target, None)
            }
        }
    }

    /// Task loss of a finished image.
    pub fn loss(&self, output: &Tensor) -> Result<f32> {
        let mut tape = Tape::new();
        let out = tape.constant(output.clone());
        let loss = self.loss_on_tape(&mut tape, out)?;
        Ok(tape.value(loss).data()[0])
    }
}

/// Task loss `E(output; x~)`.
pub fn task_loss(output: &Tensor, obs: &Observation) -> Result<f32> {
    obs.objective().loss(output)
}

/// Clean reference image, counting every read.
#[derive(Debug)]
struct HeldOut {
    image: Tensor,
    reads: AtomicUsize,
}

/// A degraded observation together with its held-out clean reference.
#[derive(Debug)]
pub struct Observation {
    objective: Objective,
    degradation: Degradation,
    clean: HeldOut,
    seed: u64,
}

impl Clone for Observation {
    fn clone(&self) -> Self {
        Self {
            objective: self.objective.clone(),
            degradation: self.degradation.clone(),
            clean: HeldOut { image: self.clean.image.clone(), reads: AtomicUsize::new(0) },
            seed: self.seed,
        }
    }
}

impl Observation {
    pub fn objective(&self) -> &Objective {
        &self.objective
    }

    pub fn observed(&self) -> &Tensor {
        self.objective.observed()
    }

    pub fn degradation(&self) -> &Degradation {
        &self.degradation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Keep map of an inpainting task, broadcast over channels.
    pub fn pixel_mask(&self) -> Option<&[f32]> {
        match self.objective.operator() {
            Operator::PixelMask(w) => Some(w),
            _ => None,
        }
    }

    /// The clean image. Only evaluation code should call this.
    pub fn clean(&self) -> &Tensor {
        self.clean.reads.fetch_add(1, Ordering::Relaxed);
        &self.clean.image
    }

    /// How many times [`clean`](Self::clean) has been called.
    pub fn clean_reads(&self) -> usize {
        self.clean.reads.load(Ordering::Relaxed)
    }
}

/// The additive noise field (before clipping) that denoising with `seed` uses.
pub fn gaussian_noise(shape: [usize; 4], sigma: f32, seed: u64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    RngStream::new(seed, "observation-noise").fill_normal(t.data_mut(), sigma);
    t
}

/// Applies `d` to `clean`; all randomness derives from `seed`.
pub fn make_observation(clean: &Tensor, d: &Degradation, seed: u64) -> Result<Observation> {
    d.validate()?;
    let (c, h, w) = image_dims(clean)?;
    if clean.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("clean image must lie in [0, 1]".into()));
    }
    let shape = [1, c, h, w];
    let mut rng = RngStream::new(seed, "observation");
    let objective = match d {
        Degradation::Denoise { sigma } => {
            let mut noisy = clean.clone();
            if *sigma > 0.0 {
                let noise = gaussian_noise(shape, *sigma, seed);
                for (v, n) in noisy.data_mut().iter_mut().zip(noise.data()) {
                    *v = (*v + n).clamp(0.0, 1.0);
                }
            }
            Objective::new(noisy, Operator::Identity, shape)?
        }
        Degradation::Inpaint { pattern } => {
            let keep: Vec<bool> = match pattern {
                InpaintPattern::Bernoulli { keep_prob } => (0..h * w).map(|_| rng.bernoulli(*keep_prob)).collect(),
                InpaintPattern::Text => text_pattern(h, w, &mut rng),
                InpaintPattern::Pixels { keep } => {
                    if keep.len() != h * w {
                        return Err(Error::Shape(format!("pixel mask has {} entries for a {h}x{w} image", keep.len())));
                    }
                    keep.clone()
                }
            };
            let weight: Vec<f32> = (0..c).flat_map(|_| keep.iter().map(|&k| if k { 1.0 } else { 0.0 })).collect();
            let mut observed = clean.clone();
            for (v, &k) in observed.data_mut().iter_mut().zip(&weight) {
                *v *= k;
            }
            Objective::new(observed, Operator::PixelMask(Arc::new(weight)), shape)?
        }
        Degradation::SuperResolve { factor } => {
            if h % factor != 0 || w % factor != 0 {
                return Err(Error::Shape(format!("{h}x{w} is not divisible by SR factor {factor}")));
            }
            let low = resample::resample_to(clean, h / factor, w / factor, ResampleMode::Lanczos)?.map(|v| v.clamp(0.0, 1.0));
            Objective::new(low, Operator::Downsample { factor: *factor }, shape)?
        }
    };
    Ok(Observation {
        objective,
        degradation: d.clone(),
        clean: HeldOut { image: clean.clone(), reads: AtomicUsize::new(0) },
        seed,
    })
}
