use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, OptimizerState, RngStream, Tape, Tensor};
use crate::priors::{ForwardMode, InputCode, ParamSet, PriorNetwork};
use crate::tasks::{psnr, ssim, MetricRecord, Objective, Observation};

/// Iterations per fit at desk scale.
pub const DEFAULT_ITERATIONS: usize = 1500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub iterations: usize,
    pub adam: AdamConfig,
    /// Std of the fresh Gaussian added to the code every iteration; `None`
    /// uses the code's own setting.
    pub jitter_std: Option<f32>,
    /// Record a restored-image snapshot every this many iterations (the
    /// final iteration is always recorded).
    pub metric_every: Option<usize>,
    /// Keep the restored image at the lowest-loss iteration.
    pub track_best: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS, adam: AdamConfig::default(), jitter_std: None, metric_every: None, track_best: false }
    }
}

impl FitConfig {
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("a fit needs at least one iteration".into()));
        }
        if self.metric_every == Some(0) {
            return Err(Error::InvalidArgument("metric_every must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.adam.lr)));
        }
        Ok(())
    }
}

/// Restored image after `iteration` optimizer steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub iteration: usize,
    /// Loss of the step that produced this iterate.
    pub loss: f32,
    pub image: Tensor,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    /// Task loss at every iteration (before that iteration's update).
    pub losses: Vec<f32>,
    /// Cadence snapshots; the last one is the final restored image.
    pub snapshots: Vec<Snapshot>,
    /// Restored image at the lowest-loss iteration, when tracked.
    pub best: Option<Snapshot>,
    pub optimizer: OptimizerState,
}

impl FitResult {
    pub fn final_image(&self) -> &Tensor {
        &self.snapshots.last().expect("a fit records its final iterate").image
    }

    pub fn final_loss(&self) -> f32 {
        *self.losses.last().expect("a fit runs at least one iteration")
    }

    /// Mean loss over the last `tail` iterations.
    pub fn tail_loss(&self, tail: usize) -> f64 {
        let tail = tail.clamp(1, self.losses.len());
        self.losses[self.losses.len() - tail..].iter().map(|&v| f64::from(v)).sum::<f64>() / tail as f64
    }

    /// PSNR of the final restored image against the clean reference.
    pub fn final_psnr(&self, obs: &Observation) -> Result<f64> {
        psnr(self.final_image(), obs.clean())
    }

    /// Quality of every snapshot against the clean reference.
    pub fn metrics(&self, obs: &Observation) -> Result<Vec<MetricRecord>> {
        self.snapshots
            .iter()
            .map(|s| {
                Ok(MetricRecord {
                    iteration: s.iteration,
                    loss: s.loss,
                    psnr_db: psnr(&s.image, obs.clean())?,
                    ssim: ssim(&s.image, obs.clean())?,
                })
            })
            .collect()
    }
}

/// Masked-Adam fit of `net` to one objective. The network is left at its
/// final weights; on divergence it keeps the last finite weights.
pub fn fit(net: &mut PriorNetwork, code: &InputCode, objective: &Objective, cfg: &FitConfig) -> Result<FitResult> {
    Ok(fit_impl(net, code, std::slice::from_ref(objective), cfg, None)?.0)
}

/// Fit to the sum of several objectives with one shared output.
pub fn fit_multi(net: &mut PriorNetwork, code: &InputCode, objectives: &[Objective], cfg: &FitConfig) -> Result<FitResult> {
    Ok(fit_impl(net, code, objectives, cfg, None)?.0)
}

/// Noise for jitter and Langevin updates; fixed by the network seed so every
/// fit of the same network is reproducible.
fn fit_rng(net: &PriorNetwork) -> RngStream {
    RngStream::new(net.seed(), "fit")
}

/// Core loop. With `capture_at = Some(j)`, also returns the weights after `j`
/// steps.
pub(crate) fn fit_impl(
    net: &mut PriorNetwork,
    code: &InputCode,
    objectives: &[Objective],
    cfg: &FitConfig,
    capture_at: Option<usize>,
) -> Result<(FitResult, Option<ParamSet>)> {
    cfg.validate()?;
    let first = objectives.first().ok_or_else(|| Error::InvalidArgument("no objective to fit".into()))?;
    if objectives.iter().any(|o| o.output_shape() != first.output_shape() || o.operator() != first.operator()) {
        return Err(Error::Shape("multi-image objectives must share shape and operator".into()));
    }
    let jitter = cfg.jitter_std.unwrap_or(code.jitter_std);
    let code = code.clone().with_jitter(jitter);
    let mut rng = fit_rng(net);
    let mut noise_rng = rng.fork("langevin");
    let mut opt = OptimizerState::new(cfg.adam, net.params().iter().map(|p| p.tensor.numel()));
    let keep: Vec<Option<Vec<bool>>> = {
        let mut layers = net.mask().layers().iter();
        net.params()
            .iter()
            .map(|p| p.prunable.then(|| layers.next().expect("mask matches params").keep().to_vec()))
            .collect()
    };
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut snapshots = Vec::new();
    let mut best: Option<Snapshot> = None;
    let mut captured = (capture_at == Some(0)).then(|| net.params().clone());

    for it in 0..cfg.iterations {
        let diverged = |last: &[f32]| Error::Diverged { iteration: it, last_loss: last.last().copied().unwrap_or(f32::NAN) };
        let mut tape = Tape::new();
        let binds = net.bind(&mut tape);
        let z = tape.constant(code.perturbed(&mut rng));
        let step = (|| {
            let out = net.forward_on_tape(&mut tape, z, &binds, ForwardMode::Standard)?;
            let mut loss = objectives[0].loss_on_tape(&mut tape, out)?;
            for o in &objectives[1..] {
                let l = o.loss_on_tape(&mut tape, out)?;
                loss = tape.add(loss, l)?;
            }
            Ok::<_, Error>((out, loss))
        })();
        let (out, loss) = match step {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => return Err(diverged(&losses)),
            Err(e) => return Err(e),
        };
        let loss_value = tape.value(loss).data()[0];
        if !loss_value.is_finite() {
            return Err(diverged(&losses));
        }
        if cfg.track_best && best.as_ref().is_none_or(|b| loss_value < b.loss) {
            best = Some(Snapshot { iteration: it, loss: loss_value, image: tape.value(out).clone() });
        }
        let mut grads = match tape.backward(loss) {
            Ok(g) => g,
            Err(Error::NonFinite(_)) => return Err(diverged(&losses)),
            Err(e) => return Err(e),
        };
        losses.push(loss_value);
        opt.begin_step();
        for (i, p) in net.params_mut().iter_mut().enumerate() {
            let grad = grads.take(binds.get(i)).unwrap_or_else(|| vec![0.0; p.tensor.numel()]);
            opt.update(i, p.tensor.data_mut(), &grad, keep[i].as_deref(), Some(&mut noise_rng));
        }
        let done = it + 1;
        if capture_at == Some(done) {
            captured = Some(net.params().clone());
        }
        let on_cadence = cfg.metric_every.is_some_and(|k| done % k == 0);
        if on_cadence || done == cfg.iterations {
            let image = net.forward(&code)?;
            snapshots.push(Snapshot { iteration: done, loss: loss_value, image });
        }
    }
    Ok((FitResult { losses, snapshots, best, optimizer: opt }, captured))
}
