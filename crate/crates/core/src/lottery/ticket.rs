use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{InputCode, NetworkSpec, ParamSet, PriorNetwork};
use crate::pruning::Mask;
use crate::tasks::Objective;

use super::fit::{fit, FitConfig, FitResult};

/// Where a ticket came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Source image names.
    pub sources: Vec<String>,
    pub task: String,
    pub seed: u64,
}

/// A pruned subnetwork: mask plus the reference weights it is reset to.
#[derive(Clone, Debug)]
pub struct Ticket {
    pub spec: NetworkSpec,
    pub mask: Mask,
    /// `theta_0`, or the rewind point `theta_j`.
    pub reference: ParamSet,
    pub round: usize,
    /// Mean task loss over the tail of this mask's IMP fit, when it was fitted.
    pub round_final_loss: Option<f64>,
    pub provenance: Provenance,
}

impl Ticket {
    /// The dense "ticket" of a freshly built network.
    pub fn dense(net: &PriorNetwork, provenance: Provenance) -> Self {
        Self {
            spec: net.spec().clone(),
            mask: Mask::dense_for(net.params()),
            reference: net.initial_params().clone(),
            round: 0,
            round_final_loss: None,
            provenance,
        }
    }

    pub fn sparsity(&self) -> f64 {
        self.mask.sparsity()
    }

    pub fn seed(&self) -> u64 {
        self.provenance.seed
    }

    /// Network at the reference weights with the mask applied.
    pub fn instantiate(&self) -> Result<PriorNetwork> {
        let mut net = PriorNetwork::build(&self.spec, self.seed())?;
        net.params().check_compatible(&self.reference)?;
        net.set_mask(self.mask.clone())?;
        net.reset_to(&self.reference)?;
        Ok(net)
    }

    /// Input code of the run that produced this ticket, for images of the given size.
    pub fn code(&self, height: usize, width: usize) -> Result<InputCode> {
        Ok(InputCode::sample(self.spec.code_shape(height, width)?, self.seed()))
    }
}

/// Re-fits the ticket from its reference weights on `objective`: the
/// "trained in isolation" evaluation, also used for transfer.
pub fn evaluate_ticket(ticket: &Ticket, objective: &Objective, cfg: &FitConfig) -> Result<FitResult> {
    let [_, c, h, w] = objective.output_shape();
    if c != ticket.spec.out_channels {
        return Err(Error::SpecMismatch(format!("ticket outputs {} channels, task has {c}", ticket.spec.out_channels)));
    }
    let mut net = ticket.instantiate()?;
    let code = ticket.code(h, w)?;
    fit(&mut net, &code, objective, cfg)
}

/// True when the ticket does no worse than the dense network, up to
/// `tolerance_db`.
pub fn is_matching(ticket_psnr_db: f64, dense_psnr_db: f64, tolerance_db: f64) -> bool {
    ticket_psnr_db >= dense_psnr_db - tolerance_db
}

/// Last round before the first run of `k` consecutive strict increases of the
/// round-final loss.
pub fn early_stop(round_final_losses: &[f64], k: usize) -> Result<Option<usize>> {
    if k == 0 {
        return Err(Error::InvalidArgument("early stop needs k >= 1".into()));
    }
    let rises: Vec<bool> = round_final_losses.windows(2).map(|w| w[1] > w[0]).collect();
    Ok(rises.windows(k).position(|run| run.iter().all(|&r| r)))
}
