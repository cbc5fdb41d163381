//! Deep decoder: `depth` blocks of pointwise conv (no bias), bilinear 2x
//! upsampling (all blocks but the last), ReLU and affine channel
//! normalization, then a pointwise output conv and sigmoid.
//!
//! Parameter count: `depth*k^2 + 2*depth*k + out*k`.

use crate::error::Result;
use crate::numerics::{NormKind, RngStream, Var};

use super::network::{conv_params, norm_params, LayerCtx};
use super::params::ParamSet;
use super::spec::NetworkSpec;

pub(crate) fn init_params(spec: &NetworkSpec, rng: &mut RngStream) -> Result<ParamSet> {
    let k = spec.code_channels;
    let mut params = ParamSet::new();
    for i in 0..spec.depth() {
        conv_params(&mut params, rng, &format!("b{i}.conv"), k, k, 1, false)?;
        norm_params(&mut params, &format!("b{i}.norm"), k)?;
    }
    conv_params(&mut params, rng, "out.conv", k, spec.out_channels, 1, false)?;
    Ok(params)
}

pub(crate) fn forward(spec: &NetworkSpec, ctx: &mut LayerCtx<'_>, code: Var) -> Result<Var> {
    let mut x = code;
    for i in 0..spec.depth() {
        x = ctx.conv(&format!("b{i}.conv"), x, 1, false)?;
        if i + 1 < spec.depth() {
            x = ctx.tape.resample_by(x, 2.0, spec.upsample)?;
        }
        x = ctx.relu(x)?;
        x = ctx.norm(&format!("b{i}.norm"), x, NormKind::ChannelNorm)?;
    }
    let out = ctx.conv("out.conv", x, 1, false)?;
    ctx.output(out)
}
