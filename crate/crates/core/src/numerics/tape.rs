//! Reverse-mode differentiation over a linear tape.
//!
//! Nodes are appended in execution order, so the tape is already a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//! A tape lives for one forward/backward pass and is then dropped.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::kernels::{col2im, gemm, im2col, ConvGeometry, MatView};
use super::resample::{self, AxisPlan, ResampleMode};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const NORM_EPS: f32 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "slope")]
pub enum Activation {
    LeakyRelu(f32),
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    /// Statistics per channel over batch and spatial extent.
    BatchNorm,
    /// Statistics per sample and channel over the spatial extent.
    ChannelNorm,
}

enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geometry: ConvGeometry,
        /// Per-sample column matrices; `None` for pointwise convolutions.
        cols: Option<Vec<f32>>,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    Normalize {
        input: Var,
        gamma: Var,
        beta: Var,
        kind: NormKind,
        xhat: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Resample {
        input: Var,
        rows: Arc<AxisPlan>,
        cols: Arc<AxisPlan>,
    },
    Concat {
        inputs: Vec<Var>,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f32,
    },
    Sum {
        input: Var,
    },
    Mse {
        a: Var,
        b: Var,
        weight: Option<Arc<Vec<f32>>>,
        support: f64,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
}

impl Gradients {
    /// Gradient of a node, or `None` if it does not influence the loss.
    pub fn get(&self, var: Var) -> Option<&[f32]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f32>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn accumulate(slot: &mut Option<Vec<f32>>, len: usize) -> &mut Vec<f32> {
    slot.get_or_insert_with(|| vec![0.0; len])
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, what: &'static str) -> Result<Var> {
        if !all_finite(value.data()) {
            return Err(Error::NonFinite(what));
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::Conv2d { input, weight, bias, .. } => {
                self.requires_grad(*input)
                    || self.requires_grad(*weight)
                    || bias.is_some_and(|b| self.requires_grad(b))
            }
            Op::Activation { input, .. }
            | Op::Resample { input, .. }
            | Op::Scale { input, .. }
            | Op::Sum { input } => self.requires_grad(*input),
            Op::Normalize { input, gamma, beta, .. } => {
                self.requires_grad(*input) || self.requires_grad(*gamma) || self.requires_grad(*beta)
            }
            Op::Concat { inputs } => inputs.iter().any(|v| self.requires_grad(*v)),
            Op::Add { a, b } | Op::Mse { a, b, .. } => self.requires_grad(*a) || self.requires_grad(*b),
        };
        self.nodes.push(Node { value, requires_grad, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, requires_grad: false, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, requires_grad: true, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    /// Cross-correlation of an NCHW input with an OIKK weight, zero padding.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4()?;
        let [o, wc, kh, kw] = self.value(weight).dims4()?;
        if wc != c {
            return Err(Error::Shape(format!("conv input has {c} channels, weight expects {wc}")));
        }
        if kh != kw {
            return Err(Error::Shape(format!("only square kernels are supported, got {kh}x{kw}")));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv stride must be positive".into()));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::Shape(format!(
                "kernel {kh}x{kw} does not fit padded input {h}x{w} (padding {padding})"
            )));
        }
        if let Some(b) = bias {
            if self.value(b).numel() != o {
                return Err(Error::Shape(format!("bias needs {o} entries, got {}", self.value(b).numel())));
            }
        }
        let geometry = ConvGeometry { channels: c, height: h, width: w, kernel: kh, stride, padding };
        let (ho, wo) = (geometry.out_height(), geometry.out_width());
        let patch = geometry.patch_len();
        let x = self.value(input).data();
        let wt = self.value(weight).data();
        let mut out = vec![0.0f32; n * o * ho * wo];
        let cols = if geometry.is_pointwise() {
            for b in 0..n {
                let xb = &x[b * c * h * w..(b + 1) * c * h * w];
                gemm(MatView::new(wt, o, c), MatView::new(xb, c, h * w), 0.0, &mut out[b * o * h * w..(b + 1) * o * h * w]);
            }
            None
        } else {
            let mut cols = vec![0.0f32; n * patch * ho * wo];
            for b in 0..n {
                let cb = &mut cols[b * patch * ho * wo..(b + 1) * patch * ho * wo];
                im2col(&x[b * c * h * w..(b + 1) * c * h * w], &geometry, cb);
                gemm(MatView::new(wt, o, patch), MatView::new(cb, patch, ho * wo), 0.0, &mut out[b * o * ho * wo..(b + 1) * o * ho * wo]);
            }
            Some(cols)
        };
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (chunk, &bias) in out.chunks_mut(ho * wo).zip(bv.iter().cycle()) {
                for v in chunk {
                    *v += bias;
                }
            }
        }
        let value = Tensor::new([n, o, ho, wo], out)?;
        self.push(value, Op::Conv2d { input, weight, bias, geometry, cols }, "conv2d")
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Result<Var> {
        let value = self.value(input).map(|v| match kind {
            Activation::LeakyRelu(slope) => {
                if v > 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => sigmoid(v),
        });
        self.push(value, Op::Activation { input, kind }, "activation")
    }

    /// Normalizes to zero mean and unit variance per group, then applies the
    /// per-channel affine map `gamma * x + beta`.
    pub fn normalize(&mut self, input: Var, gamma: Var, beta: Var, kind: NormKind) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4()?;
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(Error::Shape(format!("normalization affine parameters must have {c} entries")));
        }
        let x = self.value(input).data();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let plane = h * w;
        let mut xhat = vec![0.0f32; x.len()];
        let mut out = vec![0.0f32; x.len()];
        let groups = norm_groups(kind, n, c);
        let mut inv_std = Vec::with_capacity(groups.len());
        for group in &groups {
            let count = (group.samples.len() * plane) as f64;
            let mut sum = 0.0f64;
            for &s in &group.samples {
                let off = (s * c + group.channel) * plane;
                sum += lane_sum(&x[off..off + plane], f64::from);
            }
            let mean = sum / count;
            let mut sq = 0.0f64;
            for &s in &group.samples {
                let off = (s * c + group.channel) * plane;
                sq += lane_sum(&x[off..off + plane], |v| (f64::from(v) - mean).powi(2));
            }
            let istd = (1.0 / (sq / count + f64::from(NORM_EPS)).sqrt()) as f32;
            let mean = mean as f32;
            let (gc, bc) = (g[group.channel], bt[group.channel]);
            for &s in &group.samples {
                let r = (s * c + group.channel) * plane..(s * c + group.channel + 1) * plane;
                for ((xh, o), &v) in xhat[r.clone()].iter_mut().zip(&mut out[r.clone()]).zip(&x[r]) {
                    *xh = (v - mean) * istd;
                    *o = gc * *xh + bc;
                }
            }
            inv_std.push(istd);
        }
        let value = Tensor::new([n, c, h, w], out)?;
        self.push(value, Op::Normalize { input, gamma, beta, kind, xhat, inv_std }, "normalize")
    }

    /// Resamples spatial dims to `(out_h, out_w)`.
    pub fn resample(&mut self, input: Var, out_h: usize, out_w: usize, mode: ResampleMode) -> Result<Var> {
        let [n, c, h, w] = self.value(input).dims4()?;
        let rows = Arc::new(AxisPlan::build(mode, h, out_h)?);
        let cols = Arc::new(AxisPlan::build(mode, w, out_w)?);
        let mut out = vec![0.0f32; n * c * out_h * out_w];
        resample::apply(self.value(input).data(), n * c, &rows, &cols, &mut out);
        let value = Tensor::new([n, c, out_h, out_w], out)?;
        self.push(value, Op::Resample { input, rows, cols }, "resample")
    }

    /// Resamples by a scale factor; the scaled size must be integral.
    pub fn resample_by(&mut self, input: Var, factor: f64, mode: ResampleMode) -> Result<Var> {
        let [_, _, h, w] = self.value(input).dims4()?;
        let (oh, ow) = (resample::scaled_len(h, factor)?, resample::scaled_len(w, factor)?);
        self.resample(input, oh, ow, mode)
    }

    /// Mean over non-overlapping `factor x factor` blocks.
    pub fn avg_pool(&mut self, input: Var, factor: usize) -> Result<Var> {
        let [_, _, h, w] = self.value(input).dims4()?;
        if factor == 0 || h % factor != 0 || w % factor != 0 {
            return Err(Error::Shape(format!("cannot pool {h}x{w} by {factor}")));
        }
        self.resample(input, h / factor, w / factor, ResampleMode::Box)
    }

    /// Concatenates NCHW tensors along the channel axis.
    pub fn concat_channels(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs.first().ok_or_else(|| Error::InvalidArgument("empty concat".into()))?;
        let [n, _, h, w] = self.value(first).dims4()?;
        let mut total_c = 0;
        for &v in inputs {
            let [vn, vc, vh, vw] = self.value(v).dims4()?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(Error::Shape("concat inputs differ in batch or spatial size".into()));
            }
            total_c += vc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total_c * plane);
        for b in 0..n {
            for &v in inputs {
                let t = self.value(v);
                let vc = t.shape()[1];
                out.extend_from_slice(&t.data()[b * vc * plane..(b + 1) * vc * plane]);
            }
        }
        let value = Tensor::new([n, total_c, h, w], out)?;
        self.push(value, Op::Concat { inputs: inputs.to_vec() }, "concat")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("add {:?} + {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(value, Op::Add { a, b }, "add")
    }

    pub fn scale(&mut self, input: Var, factor: f32) -> Result<Var> {
        let value = self.value(input).map(|v| v * factor);
        self.push(value, Op::Scale { input, factor }, "scale")
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let total: f64 = self.value(input).data().iter().map(|&v| f64::from(v)).sum();
        self.push(Tensor::scalar(total as f32), Op::Sum { input }, "sum")
    }

    /// Mean of `weight * (a - b)^2` over the weighted entries.
    ///
    /// `weight` must be binary; an all-zero weight has no support and is
    /// rejected.
    pub fn mse(&mut self, a: Var, b: Var, weight: Option<Arc<Vec<f32>>>) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Shape(format!("mse {:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let support = match &weight {
            Some(wt) => {
                if wt.len() != ta.numel() {
                    return Err(Error::Shape("mse weight size differs from inputs".into()));
                }
                if wt.iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::InvalidArgument("mse weight must be binary".into()));
                }
                wt.iter().map(|&v| f64::from(v)).sum::<f64>()
            }
            None => ta.numel() as f64,
        };
        if support == 0.0 {
            return Err(Error::InvalidArgument("mse weight has empty support".into()));
        }
        let total: f64 = match &weight {
            Some(wt) => ta
                .data()
                .iter()
                .zip(tb.data())
                .zip(wt.iter())
                .map(|((x, y), m)| f64::from(*m) * f64::from(x - y).powi(2))
                .sum(),
            None => ta.data().iter().zip(tb.data()).map(|(x, y)| f64::from(x - y).powi(2)).sum(),
        };
        let value = Tensor::scalar((total / support) as f32);
        self.push(value, Op::Mse { a, b, weight, support }, "mse")
    }

    /// Reverse sweep from a scalar `loss`. Gradients of nodes used more than
    /// once are summed.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[idx].take() else { continue };
            self.propagate(node, &grad, &mut grads);
            grads[idx] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn propagate(&self, node: &Node, grad: &[f32], grads: &mut [Option<Vec<f32>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geometry: g, cols } => {
                let [n, _, _, _] = node.value.dims4().expect("conv output is rank 4");
                let o = node.value.shape()[1];
                let (ho, wo) = (g.out_height(), g.out_width());
                let out_plane = o * ho * wo;
                let patch = g.patch_len();
                let in_len = g.channels * g.height * g.width;
                let x = self.value(*input).data();
                let wt = self.value(*weight).data();
                if self.wants(*weight) {
                    let dw = accumulate(&mut grads[weight.0], wt.len());
                    for b in 0..n {
                        let gb = &grad[b * out_plane..(b + 1) * out_plane];
                        let colm = match cols {
                            Some(cols) => &cols[b * patch * ho * wo..(b + 1) * patch * ho * wo],
                            None => &x[b * in_len..(b + 1) * in_len],
                        };
                        gemm(MatView::new(gb, o, ho * wo), MatView::transpose_of(colm, ho * wo, patch), 1.0, dw);
                    }
                }
                if let Some(bias) = bias.filter(|b| self.wants(*b)) {
                    let db = accumulate(&mut grads[bias.0], o);
                    for (i, chunk) in grad.chunks(ho * wo).enumerate() {
                        db[i % o] += chunk.iter().sum::<f32>();
                    }
                }
                if self.wants(*input) {
                    let dx = accumulate(&mut grads[input.0], x.len());
                    let mut dcols = if cols.is_some() { vec![0.0f32; patch * ho * wo] } else { Vec::new() };
                    for b in 0..n {
                        let gb = &grad[b * out_plane..(b + 1) * out_plane];
                        let dxb = &mut dx[b * in_len..(b + 1) * in_len];
                        if cols.is_some() {
                            gemm(MatView::transpose_of(wt, patch, o), MatView::new(gb, o, ho * wo), 0.0, &mut dcols);
                            col2im(&dcols, g, dxb);
                        } else {
                            gemm(MatView::transpose_of(wt, patch, o), MatView::new(gb, o, ho * wo), 1.0, dxb);
                        }
                    }
                }
            }
            Op::Activation { input, kind } => {
                if !self.wants(*input) {
                    return;
                }
                let x = self.value(*input).data();
                let y = node.value.data();
                let local: Vec<f32> = match *kind {
                    Activation::LeakyRelu(slope) => {
                        x.iter().zip(grad).map(|(&x, &g)| if x > 0.0 { g } else { slope * g }).collect()
                    }
                    Activation::Relu => x.iter().zip(grad).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect(),
                    Activation::Sigmoid => y.iter().zip(grad).map(|(&y, &g)| g * y * (1.0 - y)).collect(),
                };
                accumulate_owned(&mut grads[input.0], local);
            }
            Op::Normalize { input, gamma, beta, kind, xhat, inv_std } => {
                let [n, c, h, w] = node.value.dims4().expect("norm output is rank 4");
                let plane = h * w;
                let gv = self.value(*gamma).data();
                let groups = norm_groups(*kind, n, c);
                let mut dgamma = vec![0.0f32; c];
                let mut dbeta = vec![0.0f32; c];
                let want_x = self.wants(*input);
                let mut dx_local = if want_x { vec![0.0f32; grad.len()] } else { Vec::new() };
                for (group, &istd) in groups.iter().zip(inv_std) {
                    let ch = group.channel;
                    let count = (group.samples.len() * plane) as f32;
                    let mut sum_dy = 0.0f32;
                    let mut sum_dy_xhat = 0.0f32;
                    for &s in &group.samples {
                        let r = (s * c + ch) * plane..(s * c + ch + 1) * plane;
                        sum_dy += lane_sum(&grad[r.clone()], |g| g);
                        sum_dy_xhat += lane_dot(&grad[r.clone()], &xhat[r]);
                    }
                    dgamma[ch] += sum_dy_xhat;
                    dbeta[ch] += sum_dy;
                    if want_x {
                        let scale = gv[ch] * istd / count;
                        for &s in &group.samples {
                            let r = (s * c + ch) * plane..(s * c + ch + 1) * plane;
                            for ((d, &g), &xh) in dx_local[r.clone()].iter_mut().zip(&grad[r.clone()]).zip(&xhat[r]) {
                                *d = scale * (count * g - sum_dy - xh * sum_dy_xhat);
                            }
                        }
                    }
                }
                if want_x {
                    accumulate_owned(&mut grads[input.0], dx_local);
                }
                if self.wants(*gamma) {
                    add_into(accumulate(&mut grads[gamma.0], c), &dgamma);
                }
                if self.wants(*beta) {
                    add_into(accumulate(&mut grads[beta.0], c), &dbeta);
                }
            }
            Op::Resample { input, rows, cols } => {
                if !self.wants(*input) {
                    return;
                }
                let t = self.value(*input);
                let planes = t.shape()[0] * t.shape()[1];
                let dx = accumulate(&mut grads[input.0], t.numel());
                resample::apply_adjoint(grad, planes, rows, cols, dx);
            }
            Op::Concat { inputs } => {
                let [n, total_c, h, w] = node.value.dims4().expect("concat output is rank 4");
                let plane = h * w;
                let mut offset_c = 0;
                for &v in inputs {
                    let vc = self.value(v).shape()[1];
                    if self.wants(v) {
                        let dv = accumulate(&mut grads[v.0], n * vc * plane);
                        for b in 0..n {
                            let src = &grad[(b * total_c + offset_c) * plane..(b * total_c + offset_c + vc) * plane];
                            add_into(&mut dv[b * vc * plane..(b + 1) * vc * plane], src);
                        }
                    }
                    offset_c += vc;
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.wants(v) {
                        accumulate_owned(&mut grads[v.0], grad.to_vec());
                    }
                }
            }
            Op::Scale { input, factor } => {
                if self.wants(*input) {
                    accumulate_owned(&mut grads[input.0], grad.iter().map(|g| factor * g).collect());
                }
            }
            Op::Sum { input } => {
                if self.wants(*input) {
                    let len = self.value(*input).numel();
                    let dx = accumulate(&mut grads[input.0], len);
                    for d in dx.iter_mut() {
                        *d += grad[0];
                    }
                }
            }
            Op::Mse { a, b, weight, support } => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let k = (2.0 / *support) as f32 * grad[0];
                let local = |i: usize| {
                    let m = weight.as_ref().map_or(1.0, |w| w[i]);
                    k * m * (ta[i] - tb[i])
                };
                if self.wants(*a) {
                    let da = accumulate(&mut grads[a.0], ta.len());
                    for (i, d) in da.iter_mut().enumerate() {
                        *d += local(i);
                    }
                }
                if self.wants(*b) {
                    let db = accumulate(&mut grads[b.0], tb.len());
                    for (i, d) in db.iter_mut().enumerate() {
                        *d -= local(i);
                    }
                }
            }
        }
    }
}

/// Bitwise exponent test; vectorizes, unlike `f32::is_finite` in a short-circuiting `all`.
fn all_finite(data: &[f32]) -> bool {
    const EXP: u32 = 0x7f80_0000;
    data.iter().fold(0u32, |acc, v| acc | u32::from(v.to_bits() & EXP == EXP)) == 0
}

/// Adds an owned contribution, moving it into an empty slot.
fn accumulate_owned(slot: &mut Option<Vec<f32>>, contribution: Vec<f32>) {
    match slot {
        Some(existing) => add_into(existing, &contribution),
        None => *slot = Some(contribution),
    }
}

fn add_into(dst: &mut [f32], src: &[f32]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

struct NormGroup {
    channel: usize,
    samples: Vec<usize>,
}

const LANES: usize = 8;

/// Sum with independent lane accumulators so the loop vectorizes.
fn lane_sum<T>(xs: &[f32], f: impl Fn(f32) -> T) -> T
where
    T: Copy + Default + std::ops::AddAssign + std::iter::Sum,
{
    let mut acc = [T::default(); LANES];
    let chunks = xs.chunks_exact(LANES);
    let tail = chunks.remainder();
    for chunk in chunks {
        for (a, &v) in acc.iter_mut().zip(chunk) {
            *a += f(v);
        }
    }
    acc.into_iter().chain(tail.iter().map(|&v| f(v))).sum()
}

fn lane_dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f32 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += x[i] * y[i];
        }
    }
    acc.iter().sum::<f32>() + tail
}

fn norm_groups(kind: NormKind, n: usize, c: usize) -> Vec<NormGroup> {
    match kind {
        NormKind::BatchNorm => (0..c).map(|channel| NormGroup { channel, samples: (0..n).collect() }).collect(),
        NormKind::ChannelNorm => (0..n)
            .flat_map(|s| (0..c).map(move |channel| NormGroup { channel, samples: vec![s] }))
            .collect(),
    }
}
