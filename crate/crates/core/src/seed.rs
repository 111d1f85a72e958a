//! Deterministic seed derivation.
//!
//! Every random stream in a run is seeded from a parent seed and a tag through
//! one SplitMix64 finalization of `parent ^ (tag * golden)`. Trial `t` of an
//! experiment with master seed `s` uses `derive(s, t)`; per-trial streams use
//! the tags in [`tags`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(parent: u64, tag: u64) -> u64 {
    mix(parent ^ tag.wrapping_add(1).wrapping_mul(GOLDEN))
}

/// Folds a sequence of words into one seed, order-sensitive.
pub fn fold<I: IntoIterator<Item = u64>>(parent: u64, words: I) -> u64 {
    words.into_iter().fold(mix(parent), derive)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub mod tags {
    pub const SCENARIO: u64 = 1;
    pub const INIT_DATA: u64 = 2;
    pub const ORACLE: u64 = 3;
    pub const ENGINE: u64 = 4;
    pub const MONTE_CARLO: u64 = 5;
    pub const RANDOM_PICK: u64 = 6;
    pub const SUBSETS: u64 = 7;
}
