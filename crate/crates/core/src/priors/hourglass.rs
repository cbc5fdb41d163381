//! Encoder-decoder with skip connections.
//!
//! Scale `i` of an input `x` at resolution `R`:
//!
//! ```text
//! skip   = lrelu(bn(conv1x1(x)))                           at R
//! deeper = lrelu(bn(conv(lrelu(bn(conv_s2(x))))))          at R/2
//! deeper = scale(i + 1, deeper)                            (if not deepest)
//! up     = upsample2(deeper)                               at R
//! out    = lrelu(conv1x1(lrelu(bn(conv(bn(cat(skip, up)))))))
//! ```
//!
//! The network output is `sigmoid(conv1x1(scale(0, z)))` with no output bias.

use crate::error::Result;
use crate::numerics::{NormKind, RngStream, Var};

use super::network::{conv_params, norm_params, LayerCtx};
use super::params::ParamSet;
use super::spec::NetworkSpec;

pub(crate) fn init_params(spec: &NetworkSpec, rng: &mut RngStream) -> Result<ParamSet> {
    let mut params = ParamSet::new();
    init_scale(spec, rng, &mut params, 0, spec.code_channels)?;
    conv_params(&mut params, rng, "out.conv", spec.widths[0], spec.out_channels, 1, false)?;
    Ok(params)
}

// Registration order is forward execution order.
fn init_scale(spec: &NetworkSpec, rng: &mut RngStream, params: &mut ParamSet, i: usize, cin: usize) -> Result<()> {
    let k = spec.kernel_size;
    let w = spec.widths[i];
    let s = spec.skip_widths[i];
    if s > 0 {
        conv_params(params, rng, &format!("s{i}.skip.conv"), cin, s, 1, true)?;
        norm_params(params, &format!("s{i}.skip.norm"), s)?;
    }
    conv_params(params, rng, &format!("s{i}.down1.conv"), cin, w, k, true)?;
    norm_params(params, &format!("s{i}.down1.norm"), w)?;
    conv_params(params, rng, &format!("s{i}.down2.conv"), w, w, k, true)?;
    norm_params(params, &format!("s{i}.down2.norm"), w)?;
    let deeper = if i + 1 < spec.depth() {
        init_scale(spec, rng, params, i + 1, w)?;
        spec.widths[i + 1]
    } else {
        w
    };
    let cat = s + deeper;
    norm_params(params, &format!("s{i}.up.in_norm"), cat)?;
    conv_params(params, rng, &format!("s{i}.up.conv"), cat, w, k, true)?;
    norm_params(params, &format!("s{i}.up.norm"), w)?;
    conv_params(params, rng, &format!("s{i}.up.proj"), w, w, 1, true)
}

pub(crate) fn forward(spec: &NetworkSpec, ctx: &mut LayerCtx<'_>, code: Var) -> Result<Var> {
    let features = forward_scale(spec, ctx, 0, code)?;
    let out = ctx.conv("out.conv", features, 1, false)?;
    ctx.output(out)
}

fn forward_scale(spec: &NetworkSpec, ctx: &mut LayerCtx<'_>, i: usize, x: Var) -> Result<Var> {
    let bn = NormKind::BatchNorm;
    let skip = if spec.skip_widths[i] > 0 {
        let y = ctx.conv(&format!("s{i}.skip.conv"), x, 1, true)?;
        let y = ctx.norm(&format!("s{i}.skip.norm"), y, bn)?;
        Some(ctx.leaky(y)?)
    } else {
        None
    };

    let y = ctx.conv(&format!("s{i}.down1.conv"), x, 2, true)?;
    let y = ctx.norm(&format!("s{i}.down1.norm"), y, bn)?;
    let y = ctx.leaky(y)?;
    let y = ctx.conv(&format!("s{i}.down2.conv"), y, 1, true)?;
    let y = ctx.norm(&format!("s{i}.down2.norm"), y, bn)?;
    let mut deeper = ctx.leaky(y)?;
    if i + 1 < spec.depth() {
        deeper = forward_scale(spec, ctx, i + 1, deeper)?;
    }
    let [_, _, h, w] = ctx.tape.value(x).dims4()?;
    let up = ctx.tape.resample(deeper, h, w, spec.upsample)?;

    let cat = match skip {
        Some(s) => ctx.tape.concat_channels(&[s, up])?,
        None => up,
    };
    let y = ctx.norm(&format!("s{i}.up.in_norm"), cat, bn)?;
    let y = ctx.conv(&format!("s{i}.up.conv"), y, 1, true)?;
    let y = ctx.norm(&format!("s{i}.up.norm"), y, bn)?;
    let y = ctx.leaky(y)?;
    let y = ctx.conv(&format!("s{i}.up.proj"), y, 1, true)?;
    ctx.leaky(y)
}
