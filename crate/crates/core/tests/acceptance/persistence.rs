use std::fs;

use lip_core::numerics::{RngStream, Tensor};
use lip_core::persist::{load_checkpoint, load_mask, save_checkpoint, save_mask, Checkpoint};
use lip_core::pruning::{LayerMask, Mask};
use lip_core::Error;

use crate::Verdict;

const ROUND_TRIPS: usize = 1000;

fn random_shape(rng: &mut RngStream) -> Vec<usize> {
    let rank = 1 + rng.below(4);
    (0..rank).map(|_| 1 + rng.below(if rank > 2 { 4 } else { 13 })).collect()
}

fn random_name(rng: &mut RngStream, i: usize) -> String {
    let stem = ["s0.down1.conv.weight", "b2.conv.weight", "out.conv.weight", "écho.λ", ""][rng.below(5)];
    format!("{stem}{i}")
}

fn random_mask(rng: &mut RngStream) -> Mask {
    let density = f64::from(rng.uniform(0.0, 1.0));
    let layers = (0..rng.below(6))
        .map(|i| {
            let shape = random_shape(rng);
            let n = shape.iter().product();
            let keep = (0..n).map(|_| rng.bernoulli(density)).collect();
            LayerMask::new(random_name(rng, i), shape, keep).unwrap()
        })
        .collect();
    Mask::from_layers(layers)
}

fn random_checkpoint(rng: &mut RngStream) -> Checkpoint {
    let specials = [0.0, -0.0, f32::INFINITY, f32::NEG_INFINITY, f32::NAN, f32::MIN_POSITIVE / 2.0, f32::MAX];
    let layers = (0..rng.below(6))
        .map(|i| {
            let shape = random_shape(rng);
            let n = shape.iter().product();
            let data = (0..n)
                .map(|_| if rng.bernoulli(0.05) { specials[rng.below(specials.len())] } else { f32::from_bits(rng.next_u64() as u32) })
                .collect();
            (random_name(rng, i), Tensor::new(shape, data).unwrap())
        })
        .collect();
    Checkpoint { layers }
}

fn same_bits(a: &Checkpoint, b: &Checkpoint) -> bool {
    a.layers.len() == b.layers.len()
        && a.layers.iter().zip(&b.layers).all(|((na, ta), (nb, tb))| {
            na == nb && ta.shape() == tb.shape() && ta.data().iter().zip(tb.data()).all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

/// Flips one random bit, truncates, or appends garbage.
fn corrupt(bytes: &[u8], rng: &mut RngStream) -> Vec<u8> {
    let mut out = bytes.to_vec();
    match rng.below(3) {
        0 => {
            let bit = rng.below(out.len() * 8);
            out[bit / 8] ^= 1 << (bit % 8);
        }
        1 => out.truncate(rng.below(out.len())),
        _ => out.extend((0..1 + rng.below(8)).map(|_| rng.next_u64() as u8)),
    }
    out
}

pub fn round_trips() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = RngStream::new(12, "persistence");
    let (mut identical, mut rejected, mut corrupted) = (0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    for i in 0..ROUND_TRIPS {
        let path = dir.path().join(format!("case{i}.bin"));
        let bytes = if i % 2 == 0 {
            let mask = random_mask(&mut rng);
            save_mask(&mask, &path).unwrap();
            if load_mask(&path).unwrap() == mask {
                identical += 1;
            } else {
                failures.push(format!("mask {i} differs"));
            }
            fs::read(&path).unwrap()
        } else {
            let ckpt = random_checkpoint(&mut rng);
            save_checkpoint(&ckpt, &path).unwrap();
            if same_bits(&load_checkpoint(&path).unwrap(), &ckpt) {
                identical += 1;
            } else {
                failures.push(format!("checkpoint {i} differs"));
            }
            fs::read(&path).unwrap()
        };
        fs::write(&path, corrupt(&bytes, &mut rng)).unwrap();
        corrupted += 1;
        let result = if i % 2 == 0 { load_mask(&path).map(|_| ()) } else { load_checkpoint(&path).map(|_| ()) };
        match result {
            Err(Error::Checksum { .. }) => rejected += 1,
            Err(e) => failures.push(format!("case {i}: corruption rejected by {e} instead of the checksum")),
            Ok(()) => failures.push(format!("case {i}: corrupted file accepted")),
        }
    }
    failures.truncate(5);
    Verdict::new(
        failures.is_empty(),
        format!(
            "{identical}/{ROUND_TRIPS} bit-identical round trips, {rejected}/{corrupted} corruptions rejected by CRC{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}
