//! Seeded random streams.
//!
//! Every stochastic operation takes an explicit generator. Independent
//! streams (one per chain, trial or worker) are derived from a master seed
//! by selecting a ChaCha stream id, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ChainRng = ChaCha8Rng;

/// Generator for `(seed, stream)`. Distinct streams are statistically
/// independent for the same seed.
pub fn stream(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for stream 0 of `seed`.
pub fn seeded(seed: u64) -> ChainRng {
    stream(seed, 0)
}

/// Seed for item `index` (a trial or run) of an experiment with master seed
/// `master`, mixed with SplitMix64 so neighbouring indices decorrelate.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream ids used by the experiment harness. Keeping them in one place
/// avoids two consumers accidentally sharing a stream.
pub mod streams {
    pub const DATA: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const ICA: u64 = 3;
    pub const MOG: u64 = 4;
    pub const BASELINE: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const AIS: u64 = 7;
    pub const SHUFFLE: u64 = 8;
}
