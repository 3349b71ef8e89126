//! Keyed random streams.
//!
//! Every random quantity is addressed by a key (seed, dimension, role) and a
//! stream index, so the draw for a given matrix row or SGD replicate does not
//! depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const ROLE_EMBEDDING: u64 = 0x5745_4d42;
const ROLE_NOISE: u64 = 0x4e4f_4953;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn key(seed: u64, d: usize, role: u64) -> u64 {
    mix(mix(mix(seed) ^ d as u64) ^ role)
}

fn stream(seed: u64, d: usize, role: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key(seed, d, role));
    rng.set_stream(index);
    rng
}

/// Fills `row` with row `j` (0-based) of the embedding matrix W for model
/// size `d`: i.i.d. N(0, 1/d) entries.
pub fn embedding_row(seed: u64, d: usize, j: usize, row: &mut [f64]) {
    let mut rng = stream(seed, d, ROLE_EMBEDDING, j as u64);
    let scale = 1.0 / (d as f64).sqrt();
    for x in row.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *x = z * scale;
    }
}

/// Standard normal source for one SGD replicate.
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, d: usize, replicate: u64) -> Self {
        NoiseStream { rng: stream(seed, d, ROLE_NOISE, replicate) }
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = StandardNormal.sample(&mut self.rng);
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
