use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{InputCode, NetworkSpec, ParamSet, PriorNetwork};
use crate::pruning::{magnitude_prune_to_round, IMP_FRACTION};
use crate::tasks::Objective;

use super::fit::{fit_impl, FitConfig, FitResult};
use super::ticket::{early_stop, Provenance, Ticket};

/// Iterations averaged into a round's final loss.
pub const ROUND_LOSS_TAIL: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpConfig {
    /// Pruning rounds after the dense round.
    pub rounds: usize,
    pub prune_fraction: f64,
    /// Rewind point as a fraction of the dense round; 0 resets to `theta_0`.
    pub rewind_fraction: f64,
    pub fit: FitConfig,
    /// Stop after `k` consecutive increases of the round-final loss.
    pub early_stop_k: Option<usize>,
    /// Also train the last mask, which yields its round loss and its
    /// isolated evaluation.
    pub fit_final_round: bool,
}

impl Default for ImpConfig {
    fn default() -> Self {
        Self {
            rounds: 8,
            prune_fraction: IMP_FRACTION,
            rewind_fraction: 0.0,
            fit: FitConfig::default(),
            early_stop_k: None,
            fit_final_round: true,
        }
    }
}

impl ImpConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if !(self.prune_fraction > 0.0 && self.prune_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("prune fraction must lie in (0, 1), got {}", self.prune_fraction)));
        }
        if !(0.0..=1.0).contains(&self.rewind_fraction) {
            return Err(Error::InvalidArgument(format!("rewind fraction must lie in [0, 1], got {}", self.rewind_fraction)));
        }
        if self.early_stop_k == Some(0) {
            return Err(Error::InvalidArgument("early_stop_k must be at least 1".into()));
        }
        Ok(())
    }

    fn rewind_step(&self) -> usize {
        (self.rewind_fraction * self.fit.iterations as f64).round() as usize
    }
}

/// Rounds of 20% pruning needed to reach sparsity `s`.
pub fn rounds_for_sparsity(s: f64) -> usize {
    if s <= 0.0 {
        return 0;
    }
    ((1.0 - s).ln() / (1.0 - IMP_FRACTION).ln() - 1e-9).ceil() as usize
}

#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub ticket: Ticket,
    /// The fit of this round's mask from the reference weights.
    pub fit: Option<FitResult>,
}

#[derive(Clone, Debug)]
pub struct ImpTrace {
    /// Round 0 is the dense network.
    pub rounds: Vec<RoundRecord>,
    /// Round chosen by the early-stop rule, if it fired.
    pub stop_round: Option<usize>,
}

impl ImpTrace {
    pub fn ticket(&self, round: usize) -> Option<&Ticket> {
        self.rounds.get(round).map(|r| &r.ticket)
    }

    pub fn last(&self) -> &RoundRecord {
        self.rounds.last().expect("a trace holds the dense round")
    }

    pub fn round_final_losses(&self) -> Vec<f64> {
        self.rounds.iter().filter_map(|r| r.ticket.round_final_loss).collect()
    }
}

/// Single-image IMP.
pub fn imp_single(spec: &NetworkSpec, objective: &Objective, cfg: &ImpConfig, provenance: &Provenance) -> Result<ImpTrace> {
    imp_multi(spec, std::slice::from_ref(objective), cfg, provenance)
}

/// Weight-sharing IMP over several images with one shared code; the round
/// loss is the plain sum of the per-image task losses.
pub fn imp_multi(spec: &NetworkSpec, objectives: &[Objective], cfg: &ImpConfig, provenance: &Provenance) -> Result<ImpTrace> {
    cfg.validate()?;
    let first = objectives.first().ok_or_else(|| Error::InvalidArgument("IMP needs at least one image".into()))?;
    let [_, _, h, w] = first.output_shape();
    if objectives.iter().any(|o| o.output_shape() != first.output_shape()) {
        return Err(Error::Shape("all images of a multi-image run must share dimensions".into()));
    }
    let seed = provenance.seed;
    let mut net = PriorNetwork::build(spec, seed)?;
    let code = InputCode::sample(spec.code_shape(h, w)?, seed);
    let theta0 = net.initial_params().clone();

    let rewind = cfg.rewind_step();
    let (dense_fit, captured) = fit_impl(&mut net, &code, objectives, &cfg.fit, (rewind > 0).then_some(rewind))?;
    let reference: ParamSet = captured.unwrap_or_else(|| theta0.clone());
    let mut dense = Ticket::dense(&net, provenance.clone());
    dense.round_final_loss = Some(dense_fit.tail_loss(ROUND_LOSS_TAIL));
    let mut rounds = vec![RoundRecord { ticket: dense, fit: Some(dense_fit) }];
    let mut stop_round = None;

    for round in 1..=cfg.rounds {
        let mask = magnitude_prune_to_round(net.params(), net.mask(), cfg.prune_fraction, round as u32)?;
        net.set_mask(mask.clone())?;
        net.reset_to(&reference)?;
        let mut ticket = Ticket {
            spec: spec.clone(),
            mask,
            reference: reference.clone(),
            round,
            round_final_loss: None,
            provenance: provenance.clone(),
        };
        let fit = if round < cfg.rounds || cfg.fit_final_round {
            let (r, _) = fit_impl(&mut net, &code, objectives, &cfg.fit, None)?;
            ticket.round_final_loss = Some(r.tail_loss(ROUND_LOSS_TAIL));
            Some(r)
        } else {
            None
        };
        rounds.push(RoundRecord { ticket, fit });
        if let Some(k) = cfg.early_stop_k {
            let losses: Vec<f64> = rounds.iter().filter_map(|r| r.ticket.round_final_loss).collect();
            if let Some(stop) = early_stop(&losses, k)? {
                stop_round = Some(stop);
                break;
            }
        }
    }
    Ok(ImpTrace { rounds, stop_round })
}
