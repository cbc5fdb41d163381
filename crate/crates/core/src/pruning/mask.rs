use crate::error::{Error, Result};
use crate::priors::ParamSet;

/// Binary keep/prune selector for one prunable tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMask {
    pub name: String,
    pub shape: Vec<usize>,
    keep: Vec<bool>,
}

impl LayerMask {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, keep: Vec<bool>) -> Result<Self> {
        let name = name.into();
        if shape.iter().product::<usize>() != keep.len() {
            return Err(Error::Shape(format!("mask {name}: shape {shape:?} vs {} entries", keep.len())));
        }
        Ok(Self { name, shape, keep })
    }

    pub fn dense(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape, keep: vec![true; n] }
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn len(&self) -> usize {
        self.keep.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keep.is_empty()
    }

    pub fn zeros(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }

    pub fn kept(&self) -> usize {
        self.len() - self.zeros()
    }

    pub fn sparsity(&self) -> f64 {
        self.zeros() as f64 / self.len() as f64
    }
}

/// Per-layer binary masks over the prunable parameters, in layer order.
///
/// Value semantics: pruning operations return new masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    layers: Vec<LayerMask>,
    zeros: usize,
    total: usize,
}

impl Mask {
    pub fn from_layers(layers: Vec<LayerMask>) -> Self {
        let zeros = layers.iter().map(LayerMask::zeros).sum();
        let total = layers.iter().map(LayerMask::len).sum();
        Self { layers, zeros, total }
    }

    /// All-ones mask mirroring the prunable parameters.
    pub fn dense_for(params: &ParamSet) -> Self {
        Self::from_layers(
            params.prunable().map(|p| LayerMask::dense(p.name.clone(), p.tensor.shape().to_vec())).collect(),
        )
    }

    pub fn layers(&self) -> &[LayerMask] {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&LayerMask> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn zeros(&self) -> usize {
        self.zeros
    }

    pub fn kept(&self) -> usize {
        self.total - self.zeros
    }

    /// Global fraction of pruned prunable weights.
    pub fn sparsity(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.zeros as f64 / self.total as f64
        }
    }

    /// Flattened keep flags in layer order.
    pub fn flat(&self) -> Vec<bool> {
        self.layers.iter().flat_map(|l| l.keep.iter().copied()).collect()
    }

    /// Rebuilds a mask with this layout from flat keep flags.
    pub fn with_flat(&self, flat: &[bool]) -> Result<Self> {
        if flat.len() != self.total {
            return Err(Error::Shape(format!("{} flags for a mask of {}", flat.len(), self.total)));
        }
        let mut offset = 0;
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let keep = flat[offset..offset + l.len()].to_vec();
                offset += l.len();
                LayerMask { name: l.name.clone(), shape: l.shape.clone(), keep }
            })
            .collect();
        Ok(Self::from_layers(layers))
    }

    /// True when every kept entry here is also kept in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.total == other.total && self.flat().iter().zip(other.flat()).all(|(a, b)| !*a || b)
    }

    /// Verifies that this mask has one layer per prunable parameter with the
    /// same name and shape.
    pub fn check_matches(&self, params: &ParamSet) -> Result<()> {
        let prunable: Vec<_> = params.prunable().collect();
        if prunable.len() != self.layers.len() {
            return Err(Error::SpecMismatch(format!(
                "mask has {} layers, network has {} prunable tensors",
                self.layers.len(),
                prunable.len()
            )));
        }
        for (p, l) in prunable.iter().zip(&self.layers) {
            if p.name != l.name || p.tensor.shape() != l.shape.as_slice() {
                return Err(Error::SpecMismatch(format!(
                    "mask layer {} {:?} vs parameter {} {:?}",
                    l.name,
                    l.shape,
                    p.name,
                    p.tensor.shape()
                )));
            }
        }
        Ok(())
    }
}
