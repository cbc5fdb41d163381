//! Tables, profiles and frequency-domain maps from a finished run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use lip_core::persist::{load_mask, write_atomic};
use lip_core::pruning::layer_sparsity_report;
use lip_core::tasks::{fft_magnitude_diff, load_image, save_image};
use log::info;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::manifest::{summarize, CurveRow, RunManifest, RunStatus, SummaryRow};

pub const CURVES_HEADER: &str = "method,seed,round,sparsity,nonzero_params,psnr_db,ssim,loss";

#[derive(Debug, Serialize)]
struct Summary<'a> {
    kind: &'a str,
    config_hash: &'a str,
    code_version: &'a str,
    seeds: Vec<u64>,
    groups: Vec<SummaryRow>,
}

/// Writes `curves.csv`, `per_image.csv`, `summary.json`, per-mask layer
/// profiles and FFT difference maps under `<run>/report`. Returns the
/// report directory.
pub fn emit_report(run: &Path) -> Result<PathBuf> {
    let manifest = RunManifest::load(run)?;
    let dir = run.join("report");
    if manifest.status != RunStatus::Complete {
        log::warn!("run status is {:?}; reporting the seeds that finished", manifest.status);
    }
    for sub in ["profiles", "fft", "restored"] {
        fs::create_dir_all(dir.join(sub)).map_err(CliError::io(dir.join(sub)))?;
    }

    // Sparsities come from the mask files, not from what the run logged.
    let mut masks: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut profiles = 0;
    for (seed, a) in manifest.artifacts().filter(|(_, a)| a.kind == "mask") {
        let mask = load_mask(run.join(&a.path))?;
        masks.insert(a.path.clone(), (mask.sparsity(), mask.kept()));
        let name = format!(
            "profiles/seed{seed}_{}_{}_r{:02}.csv",
            a.image.as_deref().unwrap_or("all"),
            a.method.as_deref().unwrap_or("mask"),
            a.round.unwrap_or(0)
        );
        write_atomic(dir.join(name), layer_sparsity_report(&mask).to_csv().as_bytes())?;
        profiles += 1;
    }
    let rows: Vec<CurveRow> = manifest
        .rows()
        .map(|r| {
            let mut r = r.clone();
            if let Some((sparsity, kept)) = r.mask.as_ref().and_then(|m| masks.get(m)) {
                r.nonzero_params = kept + r.fixed_params;
                r.sparsity = *sparsity;
            }
            r
        })
        .collect();

    write_atomic(dir.join("curves.csv"), curves_csv(&rows).as_bytes())?;
    write_atomic(dir.join("per_image.csv"), per_image_csv(&rows).as_bytes())?;
    let summary = Summary {
        kind: &manifest.kind,
        config_hash: &manifest.config_hash,
        code_version: &manifest.code_version,
        seeds: manifest.seeds.iter().map(|s| s.seed).collect(),
        groups: summarize(&rows),
    };
    write_atomic(dir.join("summary.json"), &serde_json::to_vec_pretty(&summary)?)?;

    for (seed, a) in manifest.artifacts().filter(|(_, a)| a.kind == "restored") {
        let flat = format!("seed{seed}_{}", a.path.trim_start_matches(&format!("seed{seed}/")).replace('/', "_"));
        let to = dir.join("restored").join(flat);
        fs::copy(run.join(&a.path), &to).map_err(CliError::io(to))?;
    }
    let maps = fft_maps(run, &manifest, &dir)?;
    info!("report for {} rows, {profiles} profile(s), {maps} FFT map(s) -> {}", rows.len(), dir.display());
    Ok(dir)
}

/// One line per `(method, seed, round)`, averaged over images.
pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut groups: BTreeMap<(String, u64, usize), Vec<&CurveRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.seed, r.round)).or_default().push(r);
    }
    let mut s = format!("{CURVES_HEADER}\n");
    for ((method, seed, round), g) in groups {
        let n = g.len() as f64;
        let mean = |f: fn(&CurveRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
        let _ = writeln!(
            s,
            "{method},{seed},{round},{},{},{},{},{}",
            mean(|r| r.sparsity),
            mean(|r| r.nonzero_params as f64).round() as usize,
            mean(|r| r.psnr_db),
            mean(|r| r.ssim),
            mean(|r| r.loss)
        );
    }
    s
}

fn per_image_csv(rows: &[CurveRow]) -> String {
    let mut s = format!("{CURVES_HEADER},image\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method, r.seed, r.round, r.sparsity, r.nonzero_params, r.psnr_db, r.ssim, r.loss, r.image
        );
    }
    s
}

/// Compares every restored image with the dense (round 0) restoration of
/// the same seed and image.
fn fft_maps(run: &Path, manifest: &RunManifest, dir: &Path) -> Result<usize> {
    let restored: Vec<_> = manifest.artifacts().filter(|(_, a)| a.kind == "restored" && a.round.is_some()).collect();
    let mut count = 0;
    for &(seed, dense) in restored.iter().filter(|(_, a)| a.round == Some(0) && matches!(a.method.as_deref(), Some("lip" | "dense"))) {
        let reference = load_image(run.join(&dense.path))?;
        for &(_, other) in restored.iter().filter(|(s, a)| *s == seed && a.image == dense.image && a.path != dense.path) {
            let diff = fft_magnitude_diff(&load_image(run.join(&other.path))?, &reference)?;
            let stem = format!(
                "fft/seed{seed}_{}_{}_r{:02}",
                other.image.as_deref().unwrap_or("all"),
                other.method.as_deref().unwrap_or("net"),
                other.round.unwrap_or(0)
            );
            save_image(&diff.to_image(), dir.join(format!("{stem}.png")))?;
            write_atomic(dir.join(format!("{stem}_bands.csv")), diff.bands_csv().as_bytes())?;
            count += 1;
        }
    }
    Ok(count)
}

/// `lip fft-diff`: magnitude-spectrum difference of two images.
pub fn fft_diff_files(a: &Path, b: &Path, out: &Path) -> Result<()> {
    let diff = fft_magnitude_diff(&load_image(a)?, &load_image(b)?)?;
    fs::create_dir_all(out).map_err(CliError::io(out))?;
    save_image(&diff.to_image(), out.join("fft_diff.png"))?;
    write_atomic(out.join("fft_bands.csv"), diff.bands_csv().as_bytes())?;
    info!("FFT difference of {} and {} -> {}", a.display(), b.display(), out.display());
    Ok(())
}
