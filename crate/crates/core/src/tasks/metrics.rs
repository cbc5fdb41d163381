use std::fmt::Write as _;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::image::{image_dims, luma};

fn same_image_shape(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    let dims = image_dims(a)?;
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("images differ in shape: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(dims)
}

/// Peak signal-to-noise ratio in dB for unit peak; identical images give `+inf`.
pub fn psnr(a: &Tensor, b: &Tensor) -> Result<f64> {
    same_image_shape(a, b)?;
    let sq: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum();
    let mse = sq / a.numel() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW).map(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()).collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter_valid(x: &[f64], h: usize, w: usize, g: &[f64]) -> Vec<f64> {
    let k = g.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for ox in 0..ow {
            rows[y * ow + ox] = g.iter().enumerate().map(|(j, gj)| gj * x[y * w + ox + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = g.iter().enumerate().map(|(i, gi)| gi * rows[(oy + i) * ow + ox]).sum();
        }
    }
    out
}

/// Mean structural similarity on luma with an 11x11 Gaussian window
/// (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`, unit dynamic range; only windows
/// fully inside the image are averaged.
pub fn ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    let (_, h, w) = same_image_shape(a, b)?;
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let (x, y) = (luma(a)?, luma(b)?);
    let c1 = (0.01f64).powi(2);
    let c2 = (0.03f64).powi(2);
    let g = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, h, w, &g);
    let my = filter_valid(&y, h, w, &g);
    let sxx = filter_valid(&prod(&x, &x), h, w, &g);
    let syy = filter_valid(&prod(&y, &y), h, w, &g);
    let sxy = filter_valid(&prod(&x, &y), h, w, &g);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok((total / mx.len() as f64).clamp(-1.0, 1.0))
}

/// Centered 2-D DFT of a real plane (row-major), as complex values.
pub fn fft2_centered(x: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let row_fft = planner.plan_fft_forward(w);
    for row in buf.chunks_exact_mut(w) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(h);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for cx in 0..w {
        for y in 0..h {
            col[y] = buf[y * w + cx];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            buf[y * w + cx] = col[y];
        }
    }
    let mut shifted = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..h {
        for cx in 0..w {
            shifted[((y + h / 2) % h) * w + (cx + w / 2) % w] = buf[y * w + cx];
        }
    }
    shifted
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialBand {
    /// Normalized radial frequency bounds, cycles per pixel.
    pub band_low: f64,
    pub band_high: f64,
    pub energy_a: f64,
    pub energy_b: f64,
    pub energy_diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FftDiff {
    pub height: usize,
    pub width: usize,
    /// `|F(a)| - |F(b)|`, centered, row-major.
    pub map: Vec<f64>,
    pub bands: Vec<RadialBand>,
}

pub const RADIAL_BANDS: usize = 8;

/// Radial frequency (cycles/pixel) of centered bin `(y, x)`.
fn radius(y: usize, x: usize, h: usize, w: usize) -> f64 {
    let fy = (y as f64 - (h / 2) as f64) / h as f64;
    let fx = (x as f64 - (w / 2) as f64) / w as f64;
    (fy * fy + fx * fx).sqrt()
}

/// Band index for a radius; the last band is closed at the corner frequency.
pub fn radial_band_of(r: f64, bands: usize) -> usize {
    let max = 0.5 * std::f64::consts::SQRT_2;
    ((r / max * bands as f64) as usize).min(bands - 1)
}

/// Centered magnitude difference of the luma spectra plus radial-band energies.
pub fn fft_magnitude_diff(a: &Tensor, b: &Tensor) -> Result<FftDiff> {
    let (_, h, w) = same_image_shape(a, b)?;
    let fa = fft2_centered(&luma(a)?, h, w);
    let fb = fft2_centered(&luma(b)?, h, w);
    let max = 0.5 * std::f64::consts::SQRT_2;
    let mut bands: Vec<RadialBand> = (0..RADIAL_BANDS)
        .map(|i| RadialBand {
            band_low: max * i as f64 / RADIAL_BANDS as f64,
            band_high: max * (i + 1) as f64 / RADIAL_BANDS as f64,
            energy_a: 0.0,
            energy_b: 0.0,
            energy_diff: 0.0,
        })
        .collect();
    let mut map = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (pa, pb) = (fa[y * w + x], fb[y * w + x]);
            map.push(pa.norm() - pb.norm());
            let band = &mut bands[radial_band_of(radius(y, x, h, w), RADIAL_BANDS)];
            band.energy_a += pa.norm_sqr();
            band.energy_b += pb.norm_sqr();
            band.energy_diff += (pa - pb).norm_sqr();
        }
    }
    Ok(FftDiff { height: h, width: w, map, bands })
}

impl FftDiff {
    pub fn bands_csv(&self) -> String {
        let mut s = String::from("band_low,band_high,energy_a,energy_b,energy_diff\n");
        for b in &self.bands {
            let _ = writeln!(s, "{},{},{},{},{}", b.band_low, b.band_high, b.energy_a, b.energy_b, b.energy_diff);
        }
        s
    }

    /// Symmetric log-magnitude visualization: 0.5 is zero difference.
    pub fn to_image(&self) -> Tensor {
        let scaled: Vec<f64> = self.map.iter().map(|v| v.signum() * v.abs().ln_1p()).collect();
        let peak = scaled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let data = scaled.iter().map(|v| if peak > 0.0 { (0.5 + 0.5 * v / peak) as f32 } else { 0.5 }).collect();
        Tensor::new([1, 1, self.height, self.width], data).expect("map matches its dimensions")
    }
}
