//! Loading the images an experiment runs on.

use std::fs;
use std::path::{Path, PathBuf};

use lip_core::numerics::Tensor;
use lip_core::tasks::{image_dims, load_image, synthetic_fixtures};

use crate::config::{InputConfig, BUILTIN_SYNTHETIC};
use crate::error::{CliError, Result};

const IMAGE_EXTENSIONS: [&str; 9] = ["png", "jpg", "jpeg", "bmp", "gif", "tif", "tiff", "webp", "ppm"];

#[derive(Clone, Debug)]
pub struct DatasetImage {
    pub name: String,
    /// `None` for generated fixtures.
    pub path: Option<PathBuf>,
    pub image: Tensor,
}

/// Loads every image of `input`, center-cropped so both sides are multiples
/// of `divisor`. Gray images are promoted to RGB when the set is mixed.
pub fn ingest_dataset(input: &InputConfig, divisor: usize) -> Result<Vec<DatasetImage>> {
    let mut images = if input.source == BUILTIN_SYNTHETIC {
        synthetic_fixtures(input.size, input.fixture_seed)?
            .into_iter()
            .map(|(name, image)| DatasetImage { name, path: None, image })
            .collect()
    } else {
        load_directory(Path::new(&input.source))?
    };

    if let Some(wanted) = &input.images {
        let mut picked = Vec::with_capacity(wanted.len());
        for name in wanted {
            match images.iter().position(|im| &im.name == name) {
                Some(i) => picked.push(images[i].clone()),
                None => {
                    let known: Vec<&str> = images.iter().map(|im| im.name.as_str()).collect();
                    return Err(CliError::field("input.images", format!("no image named {name:?} (have {known:?})")));
                }
            }
        }
        images = picked;
    }

    let rgb = images.iter().any(|im| im.image.shape()[1] == 3);
    for im in &mut images {
        if rgb && im.image.shape()[1] == 1 {
            im.image = gray_to_rgb(&im.image);
        }
        im.image = center_crop(&im.image, divisor).ok_or_else(|| {
            let (_, h, w) = image_dims(&im.image).expect("loaded images are 4-d");
            CliError::ImageTooSmall {
                path: im.path.clone().unwrap_or_else(|| PathBuf::from(&im.name)),
                height: h,
                width: w,
                divisor,
            }
        })?;
    }
    Ok(images)
}

fn load_directory(dir: &Path) -> Result<Vec<DatasetImage>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::EmptyDataset(dir.to_path_buf()));
    }

    let mut images = Vec::new();
    let mut failures = Vec::new();
    for path in paths {
        match load_image(&path) {
            Ok(image) => {
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                images.push(DatasetImage { name, path: Some(path), image });
            }
            Err(lip_core::Error::Image { message, .. }) => failures.push((path, message)),
            Err(e) => failures.push((path, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::Undecodable(failures));
    }
    Ok(images)
}

fn gray_to_rgb(t: &Tensor) -> Tensor {
    let s = t.shape();
    let data = t.data().repeat(3);
    Tensor::new([1, 3, s[2], s[3]], data).expect("three copies of one plane")
}

/// Crops the centre to the largest multiple of `divisor` per side; `None`
/// when a side is smaller than `divisor`.
pub fn center_crop(t: &Tensor, divisor: usize) -> Option<Tensor> {
    let [n, c, h, w] = t.dims4().ok()?;
    let (nh, nw) = (h / divisor * divisor, w / divisor * divisor);
    if nh == 0 || nw == 0 {
        return None;
    }
    if (nh, nw) == (h, w) {
        return Some(t.clone());
    }
    let (top, left) = ((h - nh) / 2, (w - nw) / 2);
    let src = t.data();
    let mut data = Vec::with_capacity(n * c * nh * nw);
    for plane in 0..n * c {
        for y in top..top + nh {
            let row = plane * h * w + y * w;
            data.extend_from_slice(&src[row + left..row + left + nw]);
        }
    }
    Tensor::new([n, c, nh, nw], data).ok()
}
