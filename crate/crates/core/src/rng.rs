//! Seed derivation. Every stochastic component draws from its own ChaCha
//! stream keyed by `(seed, stream)` so that runs are reproducible and rows can
//! be processed in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the independent generators used across the pipeline.
pub mod stream {
    pub const INIT: u64 = 0x01;
    pub const SHUFFLE: u64 = 0x02;
    pub const AUGMENT: u64 = 0x03;
    pub const LABELS: u64 = 0x04;
    pub const SPLIT: u64 = 0x05;
    pub const SSL: u64 = 0x06;
    pub const UPSAMPLE: u64 = 0x07;
    pub const SYNTHETIC: u64 = 0x08;
    pub const LEAVEOUT: u64 = 0x09;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

/// Generator for a single row of a per-row stochastic computation.
pub fn row_rng(seed: u64, stream: u64, row: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(seed, stream), row as u64))
}
