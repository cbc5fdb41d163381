//! DIP fitting, single- and multi-image IMP, ticket evaluation and analyses.

mod fit;
mod four_targets;
mod imp;
mod ticket;

pub use fit::{fit, fit_multi, FitConfig, FitResult, Snapshot, DEFAULT_ITERATIONS};
pub use four_targets::{four_target_curves, make_target, LossCurve, TargetKind};
pub use imp::{imp_multi, imp_single, rounds_for_sparsity, ImpConfig, ImpTrace, RoundRecord, ROUND_LOSS_TAIL};
pub use ticket::{early_stop, evaluate_ticket, is_matching, Provenance, Ticket};
