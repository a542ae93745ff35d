//! Seed derivation. Every random consumer gets its own ChaCha stream so that
//! adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named stream identifiers.
pub mod stream {
    pub const ENCODER: u64 = 1;
    pub const GLOBAL_DISC: u64 = 2;
    pub const LOCAL_DISC: u64 = 3;
    pub const PRIOR_DISC: u64 = 4;
    pub const SIN: u64 = 5;
    pub const STAGE1_SHUFFLE: u64 = 10;
    pub const STAGE1_PRIOR: u64 = 11;
    pub const STAGE2_BATCHES: u64 = 12;
    pub const SUBSET: u64 = 20;
    pub const SPLIT: u64 = 21;
    pub const SYNTH: u64 = 30;
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mix a seed with an index (splitmix64 finalizer).
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
