//! Named random streams derived from a single run seed.
//!
//! Every stochastic component draws from its own child stream so that adding
//! or removing draws in one component never shifts the sequence seen by
//! another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a over the name, folded with the root seed through splitmix64.
pub fn derive_seed(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ splitmix64(h))
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn stream(root: u64, name: &str) -> Rng {
    Rng::seed_from_u64(derive_seed(root, name))
}

/// Stream keyed by an index, e.g. one per grid cell.
pub fn indexed_stream(root: u64, name: &str, index: u64) -> Rng {
    Rng::seed_from_u64(splitmix64(derive_seed(root, name) ^ splitmix64(index)))
}

/// The named child streams of one training run.
#[derive(Debug, Clone)]
pub struct RunStreams {
    pub env: Rng,
    pub explore: Rng,
    pub targets: Rng,
    pub candidates: Rng,
    pub replay: Rng,
    pub uncertainty: Rng,
    pub init: Rng,
    pub eval: Rng,
}

impl RunStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: stream(seed, "env"),
            explore: stream(seed, "explore"),
            targets: stream(seed, "targets"),
            candidates: stream(seed, "candidates"),
            replay: stream(seed, "replay"),
            uncertainty: stream(seed, "uncertainty"),
            init: stream(seed, "init"),
            eval: stream(seed, "eval"),
        }
    }
}
