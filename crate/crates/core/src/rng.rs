//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every stochastic component draws from a `ChaCha8Rng` seeded by
//! `derive_seed(master, path)`, where `path` names the component (trial id,
//! agent id, purpose tag). Streams therefore never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn stream(master: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, path))
}

/// Purpose tags used as the first path element.
pub mod tag {
    pub const TRIAL: u64 = 1;
    pub const AGENT_SAMPLER: u64 = 2;
    pub const COMMUNICATION: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const DATA: u64 = 5;
    pub const GRAPH: u64 = 6;
    pub const MC_TRIAL: u64 = 7;
}
