//! Acceptance suite. Runs every criterion in order and prints one
//! `criterion N: PASS|FAIL` line each; exits non-zero if any fails.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test -p lip-core --test acceptance -- 1 2 12`.

mod experiments;
mod gradcheck;
mod oracles;
mod persistence;
mod properties;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one criterion: pass flag plus a one-line summary.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: &[Criterion] = &[
    (1, "sparsity schedule exactness", properties::schedule_exactness),
    (2, "gradient correctness", gradcheck::all_ops),
    (3, "mask-freeze invariant", properties::mask_freeze),
    (4, "parameter-count anchors", properties::param_counts),
    (5, "pruning-oracle equivalence", oracles::pruning_oracles),
    (6, "metric oracles", oracles::metric_oracles),
    (10, "early-stop rule", properties::early_stop_suite),
    (12, "persistence", persistence::round_trips),
    (7, "desk-scale LIP existence", experiments::lip_existence),
    (8, "layer-profile trend", experiments::layer_profile_trend),
    (9, "deep-decoder comparison", experiments::deep_decoder_comparison),
    (11, "transfer closure", experiments::transfer_closure),
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut results = Vec::new();
    for &(id, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panic".into());
                Verdict::new(false, format!("panicked: {msg}"))
            });
        let line = format!(
            "criterion {id:>2}: {} - {name} ({:.1}s): {}",
            if verdict.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
        println!("{line}");
        results.push((id, verdict.pass, line));
    }
    println!("\nacceptance summary");
    for (_, _, line) in &results {
        println!("  {line}");
    }
    let failed = results.iter().filter(|r| !r.1).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
