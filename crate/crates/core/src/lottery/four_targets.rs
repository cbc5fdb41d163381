use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};
use crate::priors::{InputCode, NetworkSpec, PriorNetwork};
use crate::pruning::Mask;
use crate::tasks::{gaussian_noise, image_dims, Objective, DEFAULT_SIGMA};

use super::fit::{fit, FitConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Clean,
    Noisy,
    PixelShuffled,
    WhiteNoise,
}

impl TargetKind {
    pub const ALL: [TargetKind; 4] = [TargetKind::Clean, TargetKind::Noisy, TargetKind::PixelShuffled, TargetKind::WhiteNoise];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Clean => "clean",
            TargetKind::Noisy => "noisy",
            TargetKind::PixelShuffled => "pixel_shuffled",
            TargetKind::WhiteNoise => "white_noise",
        }
    }
}

/// Builds one of the four fitting targets from a clean image.
pub fn make_target(clean: &Tensor, kind: TargetKind, seed: u64) -> Result<Tensor> {
    let (c, h, w) = image_dims(clean)?;
    let plane = h * w;
    Ok(match kind {
        TargetKind::Clean => clean.clone(),
        TargetKind::Noisy => {
            let noise = gaussian_noise([1, c, h, w], DEFAULT_SIGMA, seed);
            let mut t = clean.clone();
            for (v, n) in t.data_mut().iter_mut().zip(noise.data()) {
                *v = (*v + n).clamp(0.0, 1.0);
            }
            t
        }
        TargetKind::PixelShuffled => {
            // Pixels move as a whole, so the colour histogram is preserved.
            let mut perm: Vec<usize> = (0..plane).collect();
            RngStream::new(seed, "pixel-shuffle").shuffle(&mut perm);
            let src = clean.data();
            let mut data = vec![0.0f32; src.len()];
            for ch in 0..c {
                for (dst, &from) in perm.iter().enumerate() {
                    data[ch * plane + dst] = src[ch * plane + from];
                }
            }
            Tensor::new([1, c, h, w], data)?
        }
        TargetKind::WhiteNoise => {
            let mut t = Tensor::zeros([1, c, h, w]);
            RngStream::new(seed, "white-noise").fill_uniform(t.data_mut(), 0.0, 1.0);
            t
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub net: String,
    pub target: TargetKind,
    pub losses: Vec<f32>,
}

impl LossCurve {
    /// Mean loss over the curve.
    pub fn area(&self) -> f64 {
        self.losses.iter().map(|&v| f64::from(v)).sum::<f64>() / self.losses.len().max(1) as f64
    }
}

/// Plain-MSE learning curves of every `(net, target)` pair. All nets share
/// `spec` and the `theta_0` of `seed`; they differ only in their masks.
pub fn four_target_curves(
    spec: &NetworkSpec,
    seed: u64,
    nets: &[(String, Mask)],
    clean: &Tensor,
    cfg: &FitConfig,
) -> Result<Vec<LossCurve>> {
    let (_, h, w) = image_dims(clean)?;
    let base = PriorNetwork::build(spec, seed)?;
    let code = InputCode::sample(spec.code_shape(h, w)?, seed);
    let targets = TargetKind::ALL
        .iter()
        .map(|&k| Ok((k, Objective::plain(make_target(clean, k, seed)?)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut curves = Vec::new();
    for (label, mask) in nets {
        if mask.check_matches(base.params()).is_err() {
            return Err(Error::SpecMismatch(format!("mask {label:?} does not fit the shared network")));
        }
        for (kind, objective) in &targets {
            let mut net = base.clone();
            net.set_mask(mask.clone())?;
            let r = fit(&mut net, &code, objective, cfg)?;
            curves.push(LossCurve { net: label.clone(), target: *kind, losses: r.losses });
        }
    }
    Ok(curves)
}
