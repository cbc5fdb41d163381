use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tape, Tensor};
use crate::priors::{ForwardMode, InputCode, ParamSet, PriorNetwork};
use crate::tasks::Objective;

use super::mask::{LayerMask, Mask};

/// Per-round pruning fraction of iterative magnitude pruning.
pub const IMP_FRACTION: f64 = 0.2;

/// Nominal global sparsity after `round` IMP rounds: `1 - 0.8^round`.
pub fn sparsity_at_round(round: u32) -> f64 {
    1.0 - (1.0 - IMP_FRACTION).powi(round as i32)
}

/// Number of zeros a target sparsity asks for out of `total` weights.
pub fn target_zeros(total: usize, sparsity: f64) -> usize {
    // The epsilon keeps `k/n` round-tripping to exactly `k`.
    ((sparsity * total as f64) + 1e-6).floor().min(total as f64) as usize
}

fn check_sparsity(s: f64) -> Result<()> {
    if (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("target sparsity must lie in [0, 1), got {s}")))
    }
}

/// Flattened prunable values in mask order.
pub fn flat_prunable(params: &ParamSet) -> Vec<f32> {
    params.prunable().flat_map(|p| p.tensor.data().iter().copied()).collect()
}

/// Additionally prunes the `count` lowest-scoring kept weights. Ties go to the
/// earlier (layer, index) position.
pub fn prune_lowest(mask: &Mask, scores: &[f64], count: usize) -> Result<Mask> {
    let mut flat = mask.flat();
    if scores.len() != flat.len() {
        return Err(Error::Shape(format!("{} scores for {} weights", scores.len(), flat.len())));
    }
    let mut alive: Vec<usize> = (0..flat.len()).filter(|&i| flat[i]).collect();
    if count > alive.len() {
        return Err(Error::InvalidArgument(format!("cannot prune {count} of {} remaining weights", alive.len())));
    }
    if count == 0 {
        return Ok(mask.clone());
    }
    let by_score = |a: &usize, b: &usize| scores[*a].total_cmp(&scores[*b]).then(a.cmp(b));
    alive.select_nth_unstable_by(count - 1, by_score);
    for &i in &alive[..count] {
        flat[i] = false;
    }
    mask.with_flat(&flat)
}

/// Global magnitude pruning of `floor(fraction * remaining)` surviving weights.
pub fn magnitude_prune(params: &ParamSet, mask: &Mask, fraction: f64) -> Result<Mask> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("prune fraction must lie in (0, 1), got {fraction}")));
    }
    mask.check_matches(params)?;
    let remaining = mask.kept();
    if remaining == 0 {
        return Err(Error::NothingToPrune);
    }
    let count = (fraction * remaining as f64).floor() as usize;
    let scores: Vec<f64> = flat_prunable(params).iter().map(|v| f64::from(v.abs())).collect();
    prune_lowest(mask, &scores, count)
}

/// Kept weights after `round` rounds of pruning `fraction` from `total`:
/// `ceil(total * (1 - fraction)^round)`.
pub fn scheduled_kept(total: usize, fraction: f64, round: u32) -> usize {
    ((total as f64 * (1.0 - fraction).powi(round as i32)) - 1e-9).ceil().max(0.0) as usize
}

/// Magnitude pruning down to the global schedule of `round`, so that rounding
/// never accumulates across rounds. Round 1 equals [`magnitude_prune`].
pub fn magnitude_prune_to_round(params: &ParamSet, mask: &Mask, fraction: f64, round: u32) -> Result<Mask> {
    mask.check_matches(params)?;
    if mask.kept() == 0 {
        return Err(Error::NothingToPrune);
    }
    let target = scheduled_kept(mask.total(), fraction, round);
    let count = mask.kept().saturating_sub(target);
    let scores: Vec<f64> = flat_prunable(params).iter().map(|v| f64::from(v.abs())).collect();
    prune_lowest(mask, &scores, count)
}

/// Per-layer target ratios for [`random_prune`].
#[derive(Clone, Debug, PartialEq)]
pub enum RandomProfile {
    Uniform(f64),
    Layers(Vec<f64>),
}

/// Random pruning with exact per-layer zero counts, from a dense mask.
pub fn random_prune(net: &PriorNetwork, profile: &RandomProfile, seed: u64) -> Result<Mask> {
    let dense = Mask::dense_for(net.params());
    let ratios = match profile {
        RandomProfile::Uniform(s) => {
            check_sparsity(*s)?;
            vec![*s; dense.layers().len()]
        }
        RandomProfile::Layers(r) => {
            if r.len() != dense.layers().len() {
                return Err(Error::Shape(format!("profile has {} layers, network has {}", r.len(), dense.layers().len())));
            }
            if let Some(bad) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidArgument(format!("layer sparsity {bad} outside [0, 1]")));
            }
            r.clone()
        }
    };
    let mut rng = RngStream::new(seed, "random-prune");
    let layers = dense
        .layers()
        .iter()
        .zip(ratios)
        .map(|(l, ratio)| {
            let mut idx: Vec<usize> = (0..l.len()).collect();
            rng.shuffle(&mut idx);
            let mut keep = vec![true; l.len()];
            for &i in &idx[..target_zeros(l.len(), ratio)] {
                keep[i] = false;
            }
            LayerMask::new(l.name.clone(), l.shape.clone(), keep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mask::from_layers(layers))
}

/// Connection sensitivity `|g * theta|`.
pub fn snip_scores(values: &[f32], grads: &[f32]) -> Vec<f64> {
    values.iter().zip(grads).map(|(&v, &g)| (f64::from(v) * f64::from(g)).abs()).collect()
}

/// Gradient of the task loss at the network's current (dense) weights,
/// flattened over the prunable parameters.
pub fn prunable_gradient(net: &PriorNetwork, objective: &Objective, code: &InputCode) -> Result<Vec<f32>> {
    let mut tape = Tape::new();
    let binds = net.bind(&mut tape);
    let z = tape.constant(code.tensor().clone());
    let out = net.forward_on_tape(&mut tape, z, &binds, ForwardMode::Standard)?;
    let loss = objective.loss_on_tape(&mut tape, out)?;
    let grads = tape.backward(loss)?;
    let mut flat = Vec::with_capacity(net.mask().total());
    for (i, p) in net.params().iter().enumerate() {
        if p.prunable {
            match grads.get(binds.get(i)) {
                Some(g) => flat.extend_from_slice(g),
                None => flat.extend(std::iter::repeat_n(0.0, p.tensor.numel())),
            }
        }
    }
    Ok(flat)
}

/// Single-shot SNIP at the current weights on the degraded observation.
pub fn snip_prune(net: &PriorNetwork, objective: &Objective, code: &InputCode, target_sparsity: f64) -> Result<Mask> {
    check_sparsity(target_sparsity)?;
    let grads = prunable_gradient(net, objective, code)?;
    let scores = snip_scores(&flat_prunable(net.params()), &grads);
    let dense = Mask::dense_for(net.params());
    prune_lowest(&dense, &scores, target_zeros(dense.total(), target_sparsity))
}

pub const SYNFLOW_ROUNDS: usize = 100;

/// Synaptic-flow scores `|theta| * dR/d|theta|` of the masked network, where
/// `R` is the summed output of the linearized absolute-value network on an
/// all-ones input of spatial size `(h, w)`.
pub fn synflow_scores(net: &PriorNetwork, h: usize, w: usize) -> Result<Vec<f64>> {
    let code_shape = net.spec().code_shape(h, w)?;
    let mut tape = Tape::new();
    let binds = net.bind_with(&mut tape, |_, t| t.map(f32::abs));
    let ones = tape.constant(Tensor::full(code_shape, 1.0));
    let out = net.forward_on_tape(&mut tape, ones, &binds, ForwardMode::Linearized)?;
    let r = tape.sum(out)?;
    let grads = tape.backward(r)?;
    let mut scores = Vec::with_capacity(net.mask().total());
    for (i, p) in net.params().iter().enumerate() {
        if !p.prunable {
            continue;
        }
        let values = tape.value(binds.get(i)).data();
        match grads.get(binds.get(i)) {
            Some(g) => scores.extend(values.iter().zip(g).map(|(&v, &g)| f64::from(v) * f64::from(g))),
            None => scores.extend(std::iter::repeat_n(0.0, values.len())),
        }
    }
    Ok(scores)
}

/// Iterative SynFlow: `rounds` rescorings, keeping `(1 - s)^(r / rounds)` of
/// the weights after round `r`.
pub fn synflow_prune(net: &PriorNetwork, target_sparsity: f64, rounds: usize, h: usize, w: usize) -> Result<Mask> {
    check_sparsity(target_sparsity)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("synflow needs at least one round".into()));
    }
    let mut work = net.clone();
    let mut mask = Mask::dense_for(net.params());
    work.set_mask(mask.clone())?;
    let total = mask.total();
    for r in 1..=rounds {
        let density = (1.0 - target_sparsity).powf(r as f64 / rounds as f64);
        let zeros = if r == rounds { target_zeros(total, target_sparsity) } else { target_zeros(total, 1.0 - density) };
        let scores = synflow_scores(&work, h, w)?;
        let extra = zeros.saturating_sub(mask.zeros());
        mask = prune_lowest(&mask, &scores, extra)?;
        work.set_mask(mask.clone())?;
    }
    Ok(mask)
}
