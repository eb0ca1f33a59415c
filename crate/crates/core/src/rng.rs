//! Seeded random streams.
//!
//! Every stochastic operation takes a `u64` seed and builds a
//! `ChaCha8Rng` with `seed_from_u64`. That mapping is fixed by
//! `rand_chacha` and is recorded in file metadata as [`RNG_ID`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RNG_ID: &str = "chacha8/seed_from_u64";

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed for a pipeline stage (splitmix64 finalizer).
pub fn stage_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
