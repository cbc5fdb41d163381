//! Degradation tasks, task losses, image I/O and quality metrics.

mod image;
mod metrics;
mod observation;

pub use image::{image_dims, load_image, luma, save_image, synthetic_fixture, synthetic_fixtures, FIXTURE_NAMES};
pub use metrics::{
    fft2_centered, fft_magnitude_diff, psnr, radial_band_of, ssim, FftDiff, RadialBand, RADIAL_BANDS, SSIM_SIGMA,
    SSIM_WINDOW,
};
pub use observation::{
    gaussian_noise, make_observation, task_loss, Degradation, InpaintPattern, Objective, Observation, Operator,
    DEFAULT_SIGMA,
};

use serde::{Deserialize, Serialize};

/// Quality of a restored image at one iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub loss: f32,
    #[serde(with = "crate::serde_f64_inf")]
    pub psnr_db: f64,
    pub ssim: f64,
}
