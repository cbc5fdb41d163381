use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mask::Mask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSparsity {
    pub layer_index: usize,
    pub layer_name: String,
    pub total: usize,
    pub zeros: usize,
    pub sparsity: f64,
}

/// Per-layer sparsity in network (input to output) order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityProfile {
    pub layers: Vec<LayerSparsity>,
    /// Mean layer sparsity over the first quarter of layers.
    pub front_quartile_mean: f64,
    /// Mean layer sparsity over the last quarter of layers.
    pub back_quartile_mean: f64,
}

/// Layers in one quartile: `max(1, floor(n / 4))`.
pub fn quartile_len(layers: usize) -> usize {
    (layers / 4).max(1)
}

pub fn layer_sparsity_report(mask: &Mask) -> SparsityProfile {
    let layers: Vec<LayerSparsity> = mask
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| LayerSparsity {
            layer_index: i,
            layer_name: l.name.clone(),
            total: l.len(),
            zeros: l.zeros(),
            sparsity: if l.is_empty() { 0.0 } else { l.sparsity() },
        })
        .collect();
    let q = quartile_len(layers.len()).min(layers.len());
    let mean = |ls: &[LayerSparsity]| {
        if ls.is_empty() {
            0.0
        } else {
            ls.iter().map(|l| l.sparsity).sum::<f64>() / ls.len() as f64
        }
    };
    let front_quartile_mean = mean(&layers[..q]);
    let back_quartile_mean = mean(&layers[layers.len() - q..]);
    SparsityProfile { layers, front_quartile_mean, back_quartile_mean }
}

impl SparsityProfile {
    pub fn ratios(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.sparsity).collect()
    }

    /// Earlier layers are kept denser than later ones.
    pub fn front_denser_than_back(&self) -> bool {
        self.front_quartile_mean < self.back_quartile_mean
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer_index,layer_name,total,zeros,sparsity\n");
        for l in &self.layers {
            let _ = writeln!(s, "{},{},{},{},{}", l.layer_index, l.layer_name, l.total, l.zeros, l.sparsity);
        }
        s
    }
}
