//! Images are `(1, C, H, W)` tensors with `C` in {1, 3} and values in [0, 1].

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{RngStream, Tensor};

/// Checks that `t` is a single image and returns `(C, H, W)`.
pub fn image_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    let [n, c, h, w] = t.dims4()?;
    if n != 1 || !(c == 1 || c == 3) {
        return Err(Error::Shape(format!("expected a (1, 1|3, H, W) image, got {:?}", t.shape())));
    }
    Ok((c, h, w))
}

/// Luma plane (`0.299 R + 0.587 G + 0.114 B`) in f64; gray images pass through.
pub fn luma(t: &Tensor) -> Result<Vec<f64>> {
    let (c, h, w) = image_dims(t)?;
    let d = t.data();
    let plane = h * w;
    if c == 1 {
        return Ok(d.iter().map(|&v| f64::from(v)).collect());
    }
    Ok((0..plane)
        .map(|i| 0.299 * f64::from(d[i]) + 0.587 * f64::from(d[plane + i]) + 0.114 * f64::from(d[2 * plane + i]))
        .collect())
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let err = |message: String| Error::Image { path: path.to_path_buf(), message };
    let decoded = image::ImageReader::open(path)
        .map_err(|e| err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| err(e.to_string()))?
        .decode()
        .map_err(|e| err(e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let gray = matches!(decoded.color(), image::ColorType::L8 | image::ColorType::L16 | image::ColorType::La8);
    if gray {
        let buf = decoded.to_luma8();
        let data = buf.as_raw().iter().map(|&v| f32::from(v) / 255.0).collect();
        return Tensor::new([1, 1, h, w], data);
    }
    let buf = decoded.to_rgb8();
    let raw = buf.as_raw();
    let mut data = vec![0.0f32; 3 * h * w];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * h * w + i] = f32::from(v) / 255.0;
        }
    }
    Tensor::new([1, 3, h, w], data)
}

/// Writes an 8-bit PNG; values are clamped to [0, 1] and rounded.
pub fn save_image(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (c, h, w) = image_dims(t)?;
    let quantize = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let d = t.data();
    let plane = h * w;
    let (bytes, color) = if c == 1 {
        (d.iter().map(|&v| quantize(v)).collect::<Vec<_>>(), image::ExtendedColorType::L8)
    } else {
        let mut bytes = Vec::with_capacity(3 * plane);
        for i in 0..plane {
            for ch in 0..3 {
                bytes.push(quantize(d[ch * plane + i]));
            }
        }
        (bytes, image::ExtendedColorType::Rgb8)
    };
    image::save_buffer_with_format(path, &bytes, w as u32, h as u32, color, image::ImageFormat::Png)
        .map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Names of the built-in synthetic fixtures, in generation order.
pub const FIXTURE_NAMES: [&str; 5] = ["gradient", "checker", "blobs", "text", "rings"];

/// Deterministic RGB fixture `name` of size `size x size`.
pub fn synthetic_fixture(name: &str, size: usize, seed: u64) -> Result<Tensor> {
    let mut rng = RngStream::new(seed, &format!("fixture-{name}"));
    let n = size as f32;
    let mut data = vec![0.0f32; 3 * size * size];
    let plane = size * size;
    let mut put = |x: usize, y: usize, rgb: [f32; 3]| {
        for (c, v) in rgb.into_iter().enumerate() {
            data[c * plane + y * size + x] = v.clamp(0.0, 1.0);
        }
    };
    match name {
        "gradient" => {
            let tilt = rng.uniform(0.2, 0.8);
            for y in 0..size {
                for x in 0..size {
                    let (u, v) = (x as f32 / n, y as f32 / n);
                    put(x, y, [u, tilt * v + (1.0 - tilt) * u, 1.0 - 0.5 * (u + v)]);
                }
            }
        }
        "checker" => {
            let cell = (size / 8).max(1);
            let a = [rng.uniform(0.6, 0.9), rng.uniform(0.5, 0.8), rng.uniform(0.1, 0.3)];
            let b = [rng.uniform(0.1, 0.3), rng.uniform(0.2, 0.4), rng.uniform(0.5, 0.8)];
            for y in 0..size {
                for x in 0..size {
                    put(x, y, if (x / cell + y / cell).is_multiple_of(2) { a } else { b });
                }
            }
        }
        "blobs" => {
            let blobs: Vec<([f32; 2], f32, [f32; 3])> = (0..6)
                .map(|_| {
                    let centre = [rng.uniform(0.0, n), rng.uniform(0.0, n)];
                    let radius = rng.uniform(0.08, 0.2) * n;
                    let colour = [rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)];
                    (centre, radius, colour)
                })
                .collect();
            for y in 0..size {
                for x in 0..size {
                    let mut rgb = [0.15f32; 3];
                    for (centre, radius, colour) in &blobs {
                        let d2 = (x as f32 - centre[0]).powi(2) + (y as f32 - centre[1]).powi(2);
                        let g = (-d2 / (2.0 * radius * radius)).exp();
                        for c in 0..3 {
                            rgb[c] += 0.7 * g * colour[c];
                        }
                    }
                    put(x, y, rgb);
                }
            }
        }
        "text" => {
            let keep = text_pattern(size, size, &mut rng);
            for y in 0..size {
                for x in 0..size {
                    let base = [0.2 + 0.6 * x as f32 / n, 0.5, 0.8 - 0.6 * y as f32 / n];
                    put(x, y, if keep[y * size + x] { base } else { [0.95, 0.95, 0.9] });
                }
            }
        }
        "rings" => {
            let freq = rng.uniform(0.25, 0.4);
            let (cx, cy) = (n * rng.uniform(0.35, 0.65), n * rng.uniform(0.35, 0.65));
            for y in 0..size {
                for x in 0..size {
                    let r = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
                    let s = 0.5 + 0.4 * (freq * r).sin();
                    put(x, y, [s, 0.5 + 0.3 * (x as f32 / n - 0.5), 1.0 - s]);
                }
            }
        }
        other => return Err(Error::InvalidArgument(format!("unknown synthetic fixture {other:?}"))),
    }
    Tensor::new([1, 3, size, size], data)
}

/// All built-in fixtures as `(name, image)` pairs.
pub fn synthetic_fixtures(size: usize, seed: u64) -> Result<Vec<(String, Tensor)>> {
    FIXTURE_NAMES.iter().map(|&name| Ok((name.to_string(), synthetic_fixture(name, size, seed)?))).collect()
}

/// Keep-map with `false` on pseudo-glyph strokes laid out in text lines.
pub(crate) fn text_pattern(h: usize, w: usize, rng: &mut RngStream) -> Vec<bool> {
    const GLYPH_W: usize = 3;
    const GLYPH_H: usize = 5;
    let scale = if h.min(w) >= 48 { 2 } else { 1 };
    let (cell_w, line_h) = ((GLYPH_W + 1) * scale, (GLYPH_H + 2) * scale);
    let mut keep = vec![true; h * w];
    let mut top = scale;
    while top + GLYPH_H * scale <= h {
        let mut left = scale;
        while left + GLYPH_W * scale <= w {
            // Word gaps.
            if rng.below(6) != 0 {
                let bits = rng.next_u64();
                for gy in 0..GLYPH_H {
                    for gx in 0..GLYPH_W {
                        if bits >> (gy * GLYPH_W + gx) & 1 == 1 {
                            for dy in 0..scale {
                                for dx in 0..scale {
                                    keep[(top + gy * scale + dy) * w + left + gx * scale + dx] = false;
                                }
                            }
                        }
                    }
                }
            }
            left += cell_w;
        }
        top += line_h;
    }
    keep
}
