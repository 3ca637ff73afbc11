//! Seeded random streams. Every stochastic call owns a stream derived from
//! `(seed, tag)` so results do not depend on call order elsewhere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, tag: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng
}

/// Stream tags used across the crate.
pub mod tags {
    pub const INIT: u64 = 1;
    pub const LATENTS: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const MIXING: u64 = 4;
    pub const SPEC: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const BATCH: u64 = 7;
    pub const REPARAM: u64 = 8;
    pub const AUGMENT: u64 = 9;
}
