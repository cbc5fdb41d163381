//! Run manifests: what was run, with which config, and what it produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use lip_core::persist::write_atomic;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

/// A file written by a run; paths are relative to the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub kind: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<usize>,
}

/// One evaluated network on one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub seed: u64,
    pub round: usize,
    pub image: String,
    pub sparsity: f64,
    pub nonzero_params: usize,
    /// Parameters outside the mask (biases, norms), counted in `nonzero_params`.
    #[serde(default)]
    pub fixed_params: usize,
    #[serde(with = "f64_or_null")]
    pub psnr_db: f64,
    pub ssim: f64,
    pub loss: f64,
    /// Mask file the sparsity was taken from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seconds: f64,
    pub artifacts: Vec<Artifact>,
    pub rows: Vec<CurveRow>,
}

/// Mean and population variance over seeds (and images).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    #[serde(with = "f64_or_null")]
    pub mean: f64,
    #[serde(with = "f64_or_null")]
    pub variance: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, variance }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub round: usize,
    pub n: usize,
    pub sparsity: Stat,
    pub nonzero_params: Stat,
    pub psnr_db: Stat,
    pub ssim: Stat,
    pub loss: Stat,
}

/// Groups rows by `(method, round)`.
pub fn summarize<'a>(rows: impl IntoIterator<Item = &'a CurveRow>) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&CurveRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.method.clone(), r.round)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((method, round), rows)| {
            let stat = |f: fn(&CurveRow) -> f64| Stat::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                method,
                round,
                n: rows.len(),
                sparsity: stat(|r| r.sparsity),
                nonzero_params: stat(|r| r.nonzero_params as f64),
                psnr_db: stat(|r| r.psnr_db),
                ssim: stat(|r| r.ssim),
                loss: stat(|r| r.loss),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    pub status: RunStatus,
    pub jobs: usize,
    pub total_seconds: f64,
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedRecord>,
    pub summary: Vec<SummaryRow>,
}

impl RunManifest {
    pub fn rows(&self) -> impl Iterator<Item = &CurveRow> {
        self.seeds.iter().flat_map(|s| s.rows.iter())
    }

    pub fn artifacts(&self) -> impl Iterator<Item = (u64, &Artifact)> {
        self.seeds.iter().flat_map(|s| s.artifacts.iter().map(move |a| (s.seed, a)))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(&path, &json).map_err(CliError::from)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(CliError::MissingManifest(dir.to_path_buf()));
        }
        let text = fs::read_to_string(&path).map_err(CliError::io(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn code_version() -> String {
    format!("lip {}", env!("CARGO_PKG_VERSION"))
}

/// JSON has no infinities or NaN: an exact restoration has infinite PSNR.
mod f64_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
            Null(()),
        }
        Ok(match Option::<Repr>::deserialize(d)? {
            Some(Repr::Num(v)) => v,
            Some(Repr::Str(s)) if s == "inf" => f64::INFINITY,
            _ => f64::NAN,
        })
    }
}
