use lip_core::numerics::{RngStream, Tensor};
use lip_core::priors::{InputCode, NetworkSpec, PriorNetwork};
use lip_core::pruning::{prunable_gradient, snip_prune, snip_scores, synflow_prune, synflow_scores, Mask};
use lip_core::tasks::{fft2_centered, psnr, ssim, Objective};

use crate::Verdict;

/// Prunes the `count` lowest-scoring kept weights by a full sort on
/// (score, flat index).
fn full_sort_prune(mask: &Mask, scores: &[f64], count: usize) -> Mask {
    let mut flat = mask.flat();
    let mut order: Vec<usize> = (0..flat.len()).filter(|&i| flat[i]).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    for &i in order.iter().take(count) {
        flat[i] = false;
    }
    mask.with_flat(&flat).unwrap()
}

fn oracle_zeros(total: usize, s: f64) -> usize {
    (s * total as f64 + 1e-9).floor() as usize
}

fn small_nets() -> Vec<(NetworkSpec, usize)> {
    vec![
        (NetworkSpec::deep_decoder(8, 3), 16),
        (NetworkSpec::deep_decoder(4, 2).with_out_channels(1), 8),
        (NetworkSpec::hourglass(2, 3, 2, 3), 8),
        (NetworkSpec::hourglass(1, 6, 1, 3), 8),
    ]
}

fn random_target(seed: u64, c: usize, size: usize) -> Objective {
    let mut t = Tensor::zeros([1, c, size, size]);
    RngStream::new(seed, "oracle-target").fill_uniform(t.data_mut(), 0.0, 1.0);
    Objective::plain(t).unwrap()
}

fn deep_decoder_with(k: usize, depth: usize, out: usize, seed: u64) -> PriorNetwork {
    let mut net = PriorNetwork::build(&NetworkSpec::deep_decoder(k, depth).with_out_channels(out), seed).unwrap();
    // Distinct magnitudes make every path product distinct.
    let mut rng = RngStream::new(seed, "chain-weights");
    for p in net.params_mut().iter_mut().filter(|p| p.prunable) {
        for v in p.tensor.data_mut() {
            *v = rng.uniform(0.1, 2.0) * if rng.bernoulli(0.5) { -1.0 } else { 1.0 };
        }
    }
    net
}

/// Sum of `prod |w|` over every input-to-output path through each weight of
/// a chain of pointwise layers, times the number of output pixels.
fn path_product_scores(net: &PriorNetwork, pixels: f64) -> Vec<f64> {
    let mats: Vec<(usize, usize, Vec<f64>)> = net
        .params()
        .iter()
        .filter(|p| p.prunable)
        .map(|p| (p.tensor.shape()[0], p.tensor.shape()[1], p.tensor.data().iter().map(|v| f64::from(v.abs())).collect()))
        .collect();
    let mut offsets = vec![0usize];
    for (o, i, _) in &mats {
        offsets.push(offsets.last().unwrap() + o * i);
    }
    let mut scores = vec![0.0f64; *offsets.last().unwrap()];
    // Walk every channel sequence (c0, c1, ..., cL) explicitly.
    fn walk(mats: &[(usize, usize, Vec<f64>)], offsets: &[usize], layer: usize, prev: usize, used: &mut Vec<usize>, product: f64, scores: &mut [f64], pixels: f64) {
        if layer == mats.len() {
            for &idx in used.iter() {
                scores[idx] += product * pixels;
            }
            return;
        }
        let (outs, ins, w) = &mats[layer];
        for o in 0..*outs {
            let local = o * ins + prev;
            used.push(offsets[layer] + local);
            walk(mats, offsets, layer + 1, o, used, product * w[local], scores, pixels);
            used.pop();
        }
    }
    let inputs = mats[0].1;
    for c0 in 0..inputs {
        walk(&mats, &offsets, 0, c0, &mut Vec::new(), 1.0, &mut scores, pixels);
    }
    scores
}

pub fn pruning_oracles() -> Verdict {
    let mut failures = Vec::new();
    let mut cases = 0;
    let sparsities = [0.1, 0.3, 0.5, 0.79, 0.95];

    for (n, (spec, size)) in small_nets().into_iter().enumerate() {
        let seed = 40 + n as u64;
        let net = PriorNetwork::build(&spec, seed).unwrap();
        let total = net.params().prunable_count();
        assert!(total <= 1000, "{spec:?} has {total} prunable weights");
        let code = InputCode::sample(spec.code_shape(size, size).unwrap(), seed);
        let objective = random_target(seed, spec.out_channels, size);
        let dense = Mask::dense_for(net.params());
        let values: Vec<f32> = net.params().prunable().flat_map(|p| p.tensor.data().to_vec()).collect();
        let grads = prunable_gradient(&net, &objective, &code).unwrap();
        let snip = snip_scores(&values, &grads);
        for &s in &sparsities {
            cases += 2;
            let got = snip_prune(&net, &objective, &code, s).unwrap();
            if got != full_sort_prune(&dense, &snip, oracle_zeros(total, s)) {
                failures.push(format!("snip net {n} s={s}"));
            }
            // Iterative SynFlow against the same loop with full sorts.
            let rounds = 5;
            let mut oracle = dense.clone();
            let mut work = net.clone();
            for r in 1..=rounds {
                let zeros = if r == rounds {
                    oracle_zeros(total, s)
                } else {
                    oracle_zeros(total, 1.0 - (1.0 - s).powf(r as f64 / rounds as f64))
                };
                let scores = synflow_scores(&work, size, size).unwrap();
                oracle = full_sort_prune(&oracle, &scores, zeros.saturating_sub(oracle.zeros()));
                work.set_mask(oracle.clone()).unwrap();
            }
            if synflow_prune(&net, s, rounds, size, size).unwrap() != oracle {
                failures.push(format!("synflow net {n} s={s}"));
            }
        }
    }

    // Path-product sums on pointwise chains; output pixels of a 1x1 code.
    let chains = [(1, 1, 1), (1, 3, 1), (2, 1, 1), (2, 2, 2), (3, 3, 2), (3, 2, 3)];
    let mut worst = 0.0f64;
    for (n, &(k, depth, out)) in chains.iter().enumerate() {
        cases += 1;
        let net = deep_decoder_with(k, depth, out, 70 + n as u64);
        let side = 1usize << (depth - 1);
        let got = synflow_scores(&net, side, side).unwrap();
        let expected = path_product_scores(&net, (side * side) as f64);
        for (g, e) in got.iter().zip(&expected) {
            worst = worst.max((g - e).abs() / e.abs());
        }
        if got.len() != expected.len() || worst > 1e-5 {
            failures.push(format!("path products k={k} depth={depth} out={out}: rel err {worst:.2e}"));
        }
    }

    // Single-round SynFlow at 50% removes the lowest path-product weights.
    for (k, depth, out) in [(1, 3, 1), (2, 1, 1)] {
        cases += 1;
        let net = deep_decoder_with(k, depth, out, 90);
        let side = 1usize << (depth - 1);
        let expected = path_product_scores(&net, (side * side) as f64);
        let dense = Mask::dense_for(net.params());
        let oracle = full_sort_prune(&dense, &expected, dense.total() / 2);
        if synflow_prune(&net, 0.5, 1, side, side).unwrap() != oracle {
            failures.push(format!("synflow rounds=1 on {}-weight chain", dense.total()));
        }
    }

    Verdict::new(
        failures.is_empty(),
        format!(
            "{cases} selections/score sets checked, worst path-product rel err {worst:.1e}{}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    )
}

/// SplitMix64, shared with the script that produced the reference values.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn unit(&mut self) -> f64 {
        (self.next_u64() >> 40) as f64 / (1u64 << 24) as f64
    }
}

const SIZE: usize = 32;

fn oracle_pair(i: usize) -> (Tensor, Tensor) {
    let mut rng = SplitMix64(1000 + i as u64);
    let amp = 0.05 + 0.9 * i as f64 / 49.0;
    let a: Vec<f32> = (0..SIZE * SIZE).map(|_| rng.unit() as f32).collect();
    let b: Vec<f32> = a.iter().map(|&v| ((f64::from(v) + (rng.unit() - 0.5) * amp) as f32).clamp(0.0, 1.0)).collect();
    (Tensor::new([1, 1, SIZE, SIZE], a).unwrap(), Tensor::new([1, 1, SIZE, SIZE], b).unwrap())
}

#[derive(serde::Deserialize)]
struct Reference {
    psnr_db: f64,
    ssim: f64,
}

pub fn metric_oracles() -> Verdict {
    let refs: Vec<Reference> = serde_json::from_str(include_str!("../data/metric_oracle.json")).unwrap();
    let (mut worst_psnr, mut worst_ssim) = (0.0f64, 0.0f64);
    for (i, r) in refs.iter().enumerate() {
        let (a, b) = oracle_pair(i);
        worst_psnr = worst_psnr.max((psnr(&b, &a).unwrap() - r.psnr_db).abs());
        worst_ssim = worst_ssim.max((ssim(&a, &b).unwrap() - r.ssim).abs());
    }

    let mut rng = RngStream::new(6, "parseval");
    let mut worst_parseval = 0.0f64;
    for &(h, w) in &[(32, 32), (24, 40), (17, 31), (64, 64), (8, 8)] {
        for _ in 0..4 {
            let x: Vec<f64> = (0..h * w).map(|_| f64::from(rng.uniform(-1.0, 1.0))).collect();
            let spatial: f64 = x.iter().map(|v| v * v).sum::<f64>() * (h * w) as f64;
            let spectral: f64 = fft2_centered(&x, h, w).iter().map(|z| z.norm_sqr()).sum();
            worst_parseval = worst_parseval.max((spectral - spatial).abs() / spatial);
        }
    }
    let ok = refs.len() == 50 && worst_psnr <= 1e-6 && worst_ssim <= 1e-4 && worst_parseval <= 1e-3;
    Verdict::new(
        ok,
        format!(
            "{} pairs vs scikit-image: max |dPSNR| {worst_psnr:.1e} dB, max |dSSIM| {worst_ssim:.1e}; Parseval max rel err {worst_parseval:.1e}",
            refs.len()
        ),
    )
}
