use crate::error::{Error, Result};
use crate::numerics::{Activation, NormKind, RngStream, Tape, Tensor, Var};
use crate::pruning::Mask;

use super::code::InputCode;
use super::params::ParamSet;
use super::spec::{Architecture, NetworkSpec};

/// How the forward pass treats normalization and the output sigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    Standard,
    /// Normalization layers and the output sigmoid are skipped, leaving the
    /// convolution/upsampling path used for synaptic-flow scoring.
    Linearized,
}

/// Parameter leaves recorded on a tape, parallel to [`ParamSet`] order.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: Vec<Var>,
}

impl Bindings {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn get(&self, index: usize) -> Var {
        self.vars[index]
    }
}

/// A prior network `f(z; theta * m)`: architecture, parameters, mask and the
/// initialization snapshot `theta_0`.
#[derive(Clone, Debug)]
pub struct PriorNetwork {
    spec: NetworkSpec,
    params: ParamSet,
    mask: Mask,
    initial: ParamSet,
    seed: u64,
}

impl PriorNetwork {
    /// Builds and initializes a network; `seed` determines `theta_0`.
    pub fn build(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = RngStream::new(seed, "init");
        let params = match spec.architecture {
            Architecture::Hourglass => super::hourglass::init_params(spec, &mut rng)?,
            Architecture::DeepDecoder => super::deep_decoder::init_params(spec, &mut rng)?,
        };
        let mask = Mask::dense_for(&params);
        Ok(Self { spec: spec.clone(), initial: params.clone(), params, mask, seed })
    }

    /// Assembles a network from stored parts (checkpoint loading).
    pub fn from_parts(spec: NetworkSpec, params: ParamSet, mask: Mask, seed: u64) -> Result<Self> {
        let mut net = Self::build(&spec, seed)?;
        net.params.check_compatible(&params)?;
        net.params = params;
        net.set_mask(mask)?;
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    /// The initialization snapshot `theta_0`.
    pub fn initial_params(&self) -> &ParamSet {
        &self.initial
    }

    /// Installs a mask and zeroes every pruned weight.
    pub fn set_mask(&mut self, mask: Mask) -> Result<()> {
        mask.check_matches(&self.params)?;
        self.mask = mask;
        self.enforce_mask();
        Ok(())
    }

    fn enforce_mask(&mut self) {
        let mut layers = self.mask.layers().iter();
        for p in self.params.iter_mut().filter(|p| p.prunable) {
            let layer = layers.next().expect("mask checked against params");
            for (v, &k) in p.tensor.data_mut().iter_mut().zip(layer.keep()) {
                if !k {
                    *v = 0.0;
                }
            }
        }
    }

    /// Resets all weights to `reference` (e.g. `theta_0` or a rewind point),
    /// keeping pruned weights at zero.
    pub fn reset_to(&mut self, reference: &ParamSet) -> Result<()> {
        self.params.copy_from(reference)?;
        self.enforce_mask();
        Ok(())
    }

    /// Records the masked parameters as tape leaves.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        self.bind_with(tape, |_, t| t.clone())
    }

    /// Like [`bind`](Self::bind) with a per-parameter transform applied to
    /// the masked values.
    pub fn bind_with(&self, tape: &mut Tape, transform: impl Fn(usize, &Tensor) -> Tensor) -> Bindings {
        let mut layers = self.mask.layers().iter();
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let value = if p.prunable {
                    let layer = layers.next().expect("mask checked against params");
                    let mut masked = p.tensor.clone();
                    for (v, &k) in masked.data_mut().iter_mut().zip(layer.keep()) {
                        if !k {
                            *v = 0.0;
                        }
                    }
                    masked
                } else {
                    p.tensor.clone()
                };
                tape.leaf(transform(i, &value))
            })
            .collect();
        Bindings { vars }
    }

    /// Records the forward pass for an input already on the tape.
    pub fn forward_on_tape(&self, tape: &mut Tape, input: Var, binds: &Bindings, mode: ForwardMode) -> Result<Var> {
        let [n, c, h, w] = tape.value(input).dims4()?;
        if n != 1 || c != self.spec.code_channels {
            return Err(Error::Shape(format!(
                "input code has shape {:?}, expected batch 1 with {} channels",
                tape.value(input).shape(),
                self.spec.code_channels
            )));
        }
        if self.spec.architecture == Architecture::Hourglass {
            self.spec.code_shape(h, w)?;
        }
        let mut ctx = LayerCtx { tape, params: &self.params, binds, mode, slope: self.spec.leaky_slope };
        match self.spec.architecture {
            Architecture::Hourglass => super::hourglass::forward(&self.spec, &mut ctx, input),
            Architecture::DeepDecoder => super::deep_decoder::forward(&self.spec, &mut ctx, input),
        }
    }

    /// Pure forward evaluation of `f(z; theta * m)`.
    pub fn forward(&self, code: &InputCode) -> Result<Tensor> {
        self.forward_tensor(code.tensor())
    }

    pub fn forward_tensor(&self, code: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let binds = self.bind(&mut tape);
        let input = tape.constant(code.clone());
        let out = self.forward_on_tape(&mut tape, input, &binds, ForwardMode::Standard)?;
        Ok(tape.value(out).clone())
    }

    /// Parameter count; with `only_nonzero`, pruned weights are excluded.
    pub fn count_params(&self, only_nonzero: bool) -> usize {
        let total = self.params.total_count();
        if only_nonzero {
            total - self.mask.zeros()
        } else {
            total
        }
    }
}

/// Shared state for the layer helpers of the architecture modules.
pub(crate) struct LayerCtx<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a ParamSet,
    pub binds: &'a Bindings,
    pub mode: ForwardMode,
    pub slope: f32,
}

impl LayerCtx<'_> {
    fn var(&self, name: &str) -> Result<Var> {
        self.params
            .index_of(name)
            .map(|i| self.binds.get(i))
            .ok_or_else(|| Error::SpecMismatch(format!("missing parameter {name}")))
    }

    pub fn conv(&mut self, prefix: &str, x: Var, stride: usize, bias: bool) -> Result<Var> {
        let w = self.var(&format!("{prefix}.weight"))?;
        let k = self.tape.value(w).shape()[2];
        let b = if bias { Some(self.var(&format!("{prefix}.bias"))?) } else { None };
        self.tape.conv2d(x, w, b, stride, (k - 1) / 2)
    }

    pub fn norm(&mut self, prefix: &str, x: Var, kind: NormKind) -> Result<Var> {
        if self.mode == ForwardMode::Linearized {
            return Ok(x);
        }
        let g = self.var(&format!("{prefix}.gamma"))?;
        let b = self.var(&format!("{prefix}.beta"))?;
        self.tape.normalize(x, g, b, kind)
    }

    pub fn leaky(&mut self, x: Var) -> Result<Var> {
        self.tape.activation(x, Activation::LeakyRelu(self.slope))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.tape.activation(x, Activation::Relu)
    }

    pub fn output(&mut self, x: Var) -> Result<Var> {
        match self.mode {
            ForwardMode::Standard => self.tape.activation(x, Activation::Sigmoid),
            ForwardMode::Linearized => Ok(x),
        }
    }
}

/// Uniform fan-in initialization, bound `1/sqrt(fan_in)` for weights and biases.
pub(crate) fn conv_params(
    params: &mut ParamSet,
    rng: &mut RngStream,
    prefix: &str,
    cin: usize,
    cout: usize,
    kernel: usize,
    bias: bool,
) -> Result<()> {
    let fan_in = cin * kernel * kernel;
    let bound = 1.0 / (fan_in as f32).sqrt();
    let mut w = Tensor::zeros([cout, cin, kernel, kernel]);
    rng.fill_uniform(w.data_mut(), -bound, bound);
    params.push(format!("{prefix}.weight"), w, true)?;
    if bias {
        let mut b = Tensor::zeros([cout]);
        rng.fill_uniform(b.data_mut(), -bound, bound);
        params.push(format!("{prefix}.bias"), b, false)?;
    }
    Ok(())
}

pub(crate) fn norm_params(params: &mut ParamSet, prefix: &str, channels: usize) -> Result<()> {
    params.push(format!("{prefix}.gamma"), Tensor::full([channels], 1.0), false)?;
    params.push(format!("{prefix}.beta"), Tensor::zeros([channels]), false)
}
