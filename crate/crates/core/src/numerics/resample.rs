//! Separable linear resampling: bilinear, nearest, box (average pooling) and
//! Lanczos-3.
//!
//! Every mode is expressed as a per-axis tap table, so forward and adjoint
//! passes share one implementation.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    Bilinear,
    Nearest,
    Lanczos,
    /// Non-overlapping mean over `factor x factor` blocks (downsampling only).
    Box,
}

/// Taps of one output position: `(input index, weight)`.
#[derive(Clone, Debug)]
pub struct AxisPlan {
    pub in_len: usize,
    pub out_len: usize,
    taps: Vec<Vec<(usize, f32)>>,
}

impl AxisPlan {
    pub fn build(mode: ResampleMode, in_len: usize, out_len: usize) -> Result<Self> {
        if in_len == 0 || out_len == 0 {
            return Err(Error::InvalidArgument("empty resample axis".into()));
        }
        let taps = match mode {
            ResampleMode::Bilinear => bilinear_taps(in_len, out_len),
            ResampleMode::Nearest => nearest_taps(in_len, out_len),
            ResampleMode::Lanczos => lanczos_taps(in_len, out_len),
            ResampleMode::Box => {
                if !in_len.is_multiple_of(out_len) {
                    return Err(Error::InvalidArgument(format!(
                        "box filter needs an integral factor ({in_len} -> {out_len})"
                    )));
                }
                let f = in_len / out_len;
                let w = 1.0 / f as f32;
                (0..out_len).map(|o| (o * f..(o + 1) * f).map(|i| (i, w)).collect()).collect()
            }
        };
        Ok(Self { in_len, out_len, taps })
    }

    pub fn taps(&self, out_index: usize) -> &[(usize, f32)] {
        &self.taps[out_index]
    }
}

/// Half-pixel-centred bilinear weights (`align_corners = false`).
fn bilinear_taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(in_len - 1);
            let i1 = (i0 + 1).min(in_len - 1);
            let frac = (src - i0 as f64) as f32;
            if i0 == i1 || frac == 0.0 {
                vec![(i0, 1.0)]
            } else {
                vec![(i0, 1.0 - frac), (i1, frac)]
            }
        })
        .collect()
}

fn nearest_taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f32)>> {
    (0..out_len).map(|o| vec![((o * in_len / out_len).min(in_len - 1), 1.0)]).collect()
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

fn lanczos3(x: f64) -> f64 {
    if x.abs() < 3.0 {
        sinc(x) * sinc(x / 3.0)
    } else {
        0.0
    }
}

/// Antialiased Lanczos-3: the kernel is stretched by the downscale factor and
/// weights are renormalized over in-range taps.
fn lanczos_taps(in_len: usize, out_len: usize) -> Vec<Vec<(usize, f32)>> {
    let scale = in_len as f64 / out_len as f64;
    let filter_scale = scale.max(1.0);
    let support = 3.0 * filter_scale;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(in_len);
            let mut taps: Vec<(usize, f64)> = (lo..hi)
                .map(|i| (i, lanczos3((i as f64 + 0.5 - center) / filter_scale)))
                .filter(|&(_, w)| w != 0.0)
                .collect();
            let total: f64 = taps.iter().map(|t| t.1).sum();
            for t in &mut taps {
                t.1 /= total;
            }
            taps.into_iter().map(|(i, w)| (i, w as f32)).collect()
        })
        .collect()
}

/// Output length for a rational scale factor; errors when not integral.
pub fn scaled_len(len: usize, factor: f64) -> Result<usize> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::InvalidArgument(format!("resample factor must be positive, got {factor}")));
    }
    let exact = len as f64 * factor;
    let rounded = exact.round();
    if (exact - rounded).abs() > 1e-9 || rounded < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "resampling length {len} by {factor} gives non-integral size {exact}"
        )));
    }
    Ok(rounded as usize)
}

/// Applies row and column plans to every `H x W` plane of an NCHW buffer.
pub(crate) fn apply(input: &[f32], planes: usize, rows: &AxisPlan, cols: &AxisPlan, out: &mut [f32]) {
    let (h, w) = (rows.in_len, cols.in_len);
    let (oh, ow) = (rows.out_len, cols.out_len);
    let mut tmp = vec![0.0f32; h * ow];
    for p in 0..planes {
        let src = &input[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let line = &src[y * w..(y + 1) * w];
            for ox in 0..ow {
                tmp[y * ow + ox] = cols.taps(ox).iter().map(|&(i, wt)| wt * line[i]).sum();
            }
        }
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for oy in 0..oh {
            let line = &mut dst[oy * ow..(oy + 1) * ow];
            line.fill(0.0);
            for &(iy, wt) in rows.taps(oy) {
                for (o, &t) in line.iter_mut().zip(&tmp[iy * ow..(iy + 1) * ow]) {
                    *o += wt * t;
                }
            }
        }
    }
}

/// Adjoint of [`apply`], accumulating into `input_grad`.
pub(crate) fn apply_adjoint(
    grad: &[f32],
    planes: usize,
    rows: &AxisPlan,
    cols: &AxisPlan,
    input_grad: &mut [f32],
) {
    let (h, w) = (rows.in_len, cols.in_len);
    let (oh, ow) = (rows.out_len, cols.out_len);
    let mut tmp = vec![0.0f32; h * ow];
    for p in 0..planes {
        let g = &grad[p * oh * ow..(p + 1) * oh * ow];
        tmp.fill(0.0);
        for oy in 0..oh {
            let line = &g[oy * ow..(oy + 1) * ow];
            for &(iy, wt) in rows.taps(oy) {
                for (t, &v) in tmp[iy * ow..(iy + 1) * ow].iter_mut().zip(line) {
                    *t += wt * v;
                }
            }
        }
        let dst = &mut input_grad[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let line = &mut dst[y * w..(y + 1) * w];
            for ox in 0..ow {
                let v = tmp[y * ow + ox];
                for &(ix, wt) in cols.taps(ox) {
                    line[ix] += wt * v;
                }
            }
        }
    }
}

/// Non-differentiable resampling of an NCHW tensor by `factor`.
pub fn resample(input: &Tensor, factor: f64, mode: ResampleMode) -> Result<Tensor> {
    let [n, c, h, w] = input.dims4()?;
    let (oh, ow) = (scaled_len(h, factor)?, scaled_len(w, factor)?);
    resample_to(input, oh, ow, mode).inspect(|t| {
        debug_assert_eq!(t.shape(), &[n, c, oh, ow]);
    })
}

pub fn resample_to(input: &Tensor, out_h: usize, out_w: usize, mode: ResampleMode) -> Result<Tensor> {
    let [n, c, h, w] = input.dims4()?;
    let rows = AxisPlan::build(mode, h, out_h)?;
    let cols = AxisPlan::build(mode, w, out_w)?;
    let mut out = vec![0.0; n * c * out_h * out_w];
    apply(input.data(), n * c, &rows, &cols, &mut out);
    Tensor::new([n, c, out_h, out_w], out)
}
