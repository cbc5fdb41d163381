use lip_core::lottery::{early_stop, fit, imp_single, FitConfig, ImpConfig, Provenance};
use lip_core::numerics::Tensor;
use lip_core::priors::{InputCode, NetworkSpec, PriorNetwork};
use lip_core::pruning::{magnitude_prune, Mask};
use lip_core::tasks::Objective;

use crate::Verdict;

/// IMP on the desk hourglass with one-step fits: the mask schedule does not
/// depend on how long each round trains.
pub fn schedule_exactness() -> Verdict {
    let spec = NetworkSpec::hourglass_desk();
    let target = Tensor::full([1, 3, 64, 64], 0.5);
    let objective = Objective::plain(target).unwrap();
    let cfg = ImpConfig { rounds: 10, fit: FitConfig::default().with_iterations(1), ..ImpConfig::default() };
    let trace = imp_single(&spec, &objective, &cfg, &Provenance::default()).unwrap();
    let mut worst = 0.0f64;
    let mut ok = trace.rounds.len() == 11;
    for (i, r) in trace.rounds.iter().enumerate() {
        let total = r.ticket.mask.total() as f64;
        let expected = 1.0 - 0.8f64.powi(i as i32);
        let off = (r.ticket.mask.zeros() as f64 - expected * total).abs();
        worst = worst.max(off);
        ok &= off <= 1.0;
    }
    let grid: Vec<i64> = trace.rounds[1..=6].iter().map(|r| (r.ticket.sparsity() * 100.0).round() as i64).collect();
    ok &= grid == [20, 36, 49, 59, 67, 74];
    Verdict::new(ok, format!("rounds 0..10, worst deviation {worst:.2} weights, grid {grid:?}"))
}

pub fn mask_freeze() -> Verdict {
    let spec = NetworkSpec::hourglass(2, 8, 2, 4);
    let mut net = PriorNetwork::build(&spec, 11).unwrap();
    let mask = magnitude_prune(net.params(), &Mask::dense_for(net.params()), 0.6).unwrap();
    net.set_mask(mask.clone()).unwrap();
    let code = InputCode::sample(spec.code_shape(16, 16).unwrap(), 11).with_jitter(1.0 / 30.0);
    let mut target = Tensor::zeros([1, 3, 16, 16]);
    lip_core::numerics::RngStream::new(11, "freeze-target").fill_uniform(target.data_mut(), 0.0, 1.0);
    let mut cfg = FitConfig::default().with_iterations(500);
    cfg.adam.langevin_temperature = Some(1e-8);
    let r = fit(&mut net, &code, &Objective::plain(target).unwrap(), &cfg).unwrap();

    let mut layers = mask.layers().iter();
    let (mut checked, mut violations) = (0usize, 0usize);
    for (i, p) in net.params().iter().enumerate().filter(|(_, p)| p.prunable) {
        let layer = layers.next().unwrap();
        for (j, &keep) in layer.keep().iter().enumerate() {
            if keep {
                continue;
            }
            checked += 1;
            if p.tensor.data()[j] != 0.0 || r.optimizer.first_moment(i)[j] != 0.0 || r.optimizer.second_moment(i)[j] != 0.0 {
                violations += 1;
            }
        }
    }
    Verdict::new(
        violations == 0 && checked > 0 && r.optimizer.step_count() == 500,
        format!("{checked} pruned weights checked after 500 Langevin steps, {violations} violations"),
    )
}

pub fn param_counts() -> Verdict {
    let count = |spec: &NetworkSpec| PriorNetwork::build(spec, 0).unwrap().params().total_count();
    let dd128 = count(&NetworkSpec::deep_decoder(128, 6));
    let dd320 = count(&NetworkSpec::deep_decoder(320, 6));
    let full = count(&NetworkSpec::hourglass_full_scale());
    let ok = dd128 == 100_224 && dd320 == 619_200 && (full as f64 - 2.2e6).abs() <= 0.05 * 2.2e6;
    Verdict::new(ok, format!("deep decoder k=128: {dd128}, k=320: {dd320}, full-scale hourglass: {full}"))
}

pub fn early_stop_suite() -> Verdict {
    let cases: &[(&str, &[f64], usize, Option<usize>)] = &[
        ("empty", &[], 2, None),
        ("single round", &[1.0], 2, None),
        ("monotone decrease", &[5.0, 4.0, 3.0, 2.0, 1.0], 2, None),
        ("monotone increase", &[1.0, 2.0, 3.0, 4.0], 2, Some(0)),
        ("single bump, K=2", &[1.0, 0.9, 1.1, 0.8, 0.7], 2, None),
        ("single bump, K=1", &[1.0, 0.9, 1.1, 0.8, 0.7], 1, Some(1)),
        ("late K-run", &[1.0, 0.9, 0.8, 0.85, 0.9, 0.95], 2, Some(2)),
        ("late K-run, K=3", &[1.0, 0.9, 0.8, 0.85, 0.9, 0.95], 3, Some(2)),
        ("run shorter than K", &[1.0, 0.9, 0.8, 0.85, 0.9, 0.95], 4, None),
        ("ties are not increases", &[1.0, 1.0, 1.0, 1.0], 1, None),
        ("plateau then rise", &[1.0, 1.0, 2.0, 3.0], 2, Some(1)),
        ("first of two runs", &[1.0, 2.0, 1.0, 2.0, 3.0], 2, Some(2)),
        ("run ending the sequence", &[3.0, 2.0, 1.0, 1.5, 2.0], 2, Some(2)),
        ("interrupted run", &[1.0, 1.1, 1.2, 1.15, 1.3, 1.4, 1.5], 3, Some(3)),
    ];
    let mut failures = Vec::new();
    for (name, losses, k, expected) in cases {
        let got = early_stop(losses, *k).unwrap();
        if got != *expected {
            failures.push(format!("{name}: got {got:?}, expected {expected:?}"));
        }
    }
    if early_stop(&[1.0, 2.0], 0).is_ok() {
        failures.push("K=0 accepted".into());
    }
    Verdict::new(
        failures.is_empty(),
        format!("{} sequences + K=0 rejection{}", cases.len(), if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }),
    )
}
