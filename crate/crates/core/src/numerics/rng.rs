use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Deterministic, named random stream.
///
/// The ChaCha key is derived from `(seed, name)` with FNV-1a and SplitMix64,
/// both fixed-width integer arithmetic, so a stream reproduces the same
/// sequence on every platform. Distinct names give independent streams for
/// the same experiment seed (initialization, input code, noise, ...).
#[derive(Clone, Debug)]
pub struct RngStream {
    name: String,
    rng: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, name: &str) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed ^ fnv1a(name.as_bytes());
        for chunk in key.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self { name: name.to_owned(), rng: ChaCha8Rng::from_seed(key) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Derives an independent child stream.
    pub fn fork(&self, suffix: &str) -> Self {
        let mut probe = self.rng.clone();
        Self::new(probe.next_u64(), &format!("{}/{suffix}", self.name))
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.rng.random::<f32>()
    }

    pub fn normal(&mut self, std: f32) -> f32 {
        let z: f32 = StandardNormal.sample(&mut self.rng);
        z * std
    }

    pub fn fill_uniform(&mut self, out: &mut [f32], lo: f32, hi: f32) {
        for v in out {
            *v = self.uniform(lo, hi);
        }
    }

    pub fn fill_normal(&mut self, out: &mut [f32], std: f32) {
        for v in out {
            *v = self.normal(std);
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
