use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ResampleMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Encoder-decoder with skip connections (over-parameterized prior).
    Hourglass,
    /// Pointwise convolutions with upsampling (under-parameterized prior).
    DeepDecoder,
}

/// Architecture description of a prior network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub architecture: Architecture,
    /// Channels of the input code. For the deep decoder this equals the width.
    pub code_channels: usize,
    /// Channels per scale; its length is the depth.
    pub widths: Vec<usize>,
    /// Skip-branch channels per scale (hourglass only; 0 disables a branch).
    #[serde(default)]
    pub skip_widths: Vec<usize>,
    /// Spatial kernel size of the non-pointwise convolutions.
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_upsample")]
    pub upsample: ResampleMode,
    #[serde(default = "default_out_channels")]
    pub out_channels: usize,
    #[serde(default = "default_slope")]
    pub leaky_slope: f32,
}

fn default_kernel() -> usize {
    3
}
fn default_upsample() -> ResampleMode {
    ResampleMode::Bilinear
}
fn default_out_channels() -> usize {
    3
}
fn default_slope() -> f32 {
    0.2
}

impl NetworkSpec {
    pub fn hourglass(depth: usize, width: usize, skip: usize, code_channels: usize) -> Self {
        Self {
            architecture: Architecture::Hourglass,
            code_channels,
            widths: vec![width; depth],
            skip_widths: vec![skip; depth],
            kernel_size: 3,
            upsample: ResampleMode::Bilinear,
            out_channels: 3,
            leaky_slope: 0.2,
        }
    }

    /// Five scales of 128 channels, 4-channel skips, 32-channel code.
    pub fn hourglass_full_scale() -> Self {
        Self::hourglass(5, 128, 4, 32)
    }

    /// Four scales of 32 channels, 4-channel skips, 32-channel code.
    pub fn hourglass_desk() -> Self {
        Self::hourglass(4, 32, 4, 32)
    }

    pub fn deep_decoder(k: usize, depth: usize) -> Self {
        Self {
            architecture: Architecture::DeepDecoder,
            code_channels: k,
            widths: vec![k; depth],
            skip_widths: Vec::new(),
            kernel_size: 1,
            upsample: ResampleMode::Bilinear,
            out_channels: 3,
            leaky_slope: 0.2,
        }
    }

    pub fn with_out_channels(mut self, out_channels: usize) -> Self {
        self.out_channels = out_channels;
        self
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.widths.is_empty() {
            return bad("depth must be at least 1".into());
        }
        if self.widths.contains(&0) || self.code_channels == 0 || self.out_channels == 0 {
            return bad("widths, code channels and output channels must be positive".into());
        }
        if !matches!(self.upsample, ResampleMode::Bilinear | ResampleMode::Nearest) {
            return bad(format!("upsample mode {:?} is not differentiable here", self.upsample));
        }
        match self.architecture {
            Architecture::Hourglass => {
                if self.skip_widths.len() != self.depth() {
                    return bad(format!(
                        "{} skip widths for depth {}",
                        self.skip_widths.len(),
                        self.depth()
                    ));
                }
                if self.kernel_size.is_multiple_of(2) {
                    return bad("kernel size must be odd".into());
                }
            }
            Architecture::DeepDecoder => {
                if self.widths.iter().any(|&w| w != self.code_channels) {
                    return bad("deep decoder uses one width throughout, equal to the code channels".into());
                }
            }
        }
        Ok(())
    }

    /// Number of 2x downscalings between the output and the coarsest map.
    fn scale_steps(&self) -> usize {
        match self.architecture {
            Architecture::Hourglass => self.depth(),
            Architecture::DeepDecoder => self.depth() - 1,
        }
    }

    /// Shape of the input code for an output of `height x width`.
    pub fn code_shape(&self, height: usize, width: usize) -> Result<[usize; 4]> {
        let div = 1usize << self.scale_steps();
        if !height.is_multiple_of(div) || !width.is_multiple_of(div) || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image {height}x{width} is not divisible by {div} (2^{})",
                self.scale_steps()
            )));
        }
        Ok(match self.architecture {
            Architecture::Hourglass => [1, self.code_channels, height, width],
            Architecture::DeepDecoder => [1, self.code_channels, height / div, width / div],
        })
    }

    /// Required divisor of image sides.
    pub fn size_divisor(&self) -> usize {
        1 << self.scale_steps()
    }

    /// Closed-form parameter count.
    pub fn analytic_param_count(&self) -> usize {
        let k2 = self.kernel_size * self.kernel_size;
        match self.architecture {
            Architecture::Hourglass => {
                let d = self.depth();
                let mut total = 0;
                for i in 0..d {
                    let cin = if i == 0 { self.code_channels } else { self.widths[i - 1] };
                    let w = self.widths[i];
                    let s = self.skip_widths[i];
                    if s > 0 {
                        total += cin * s + s + 2 * s;
                    }
                    total += cin * w * k2 + w + 2 * w;
                    total += w * w * k2 + w + 2 * w;
                    let deeper = if i + 1 < d { self.widths[i + 1] } else { w };
                    let cat = s + deeper;
                    total += 2 * cat;
                    total += cat * w * k2 + w + 2 * w;
                    total += w * w + w;
                }
                total + self.widths[0] * self.out_channels
            }
            Architecture::DeepDecoder => {
                let k = self.code_channels;
                let d = self.depth();
                d * k * k + 2 * d * k + self.out_channels * k
            }
        }
    }
}
