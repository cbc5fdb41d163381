//! Masks, pruning criteria and layer-wise sparsity analysis.

mod criteria;
mod mask;
mod report;

pub use criteria::{
    flat_prunable, magnitude_prune, magnitude_prune_to_round, scheduled_kept, prunable_gradient, prune_lowest, random_prune, snip_prune, snip_scores,
    sparsity_at_round, synflow_prune, synflow_scores, target_zeros, RandomProfile, IMP_FRACTION, SYNFLOW_ROUNDS,
};
pub use mask::{LayerMask, Mask};
pub use report::{layer_sparsity_report, quartile_len, LayerSparsity, SparsityProfile};
