//! Named random sub-streams derived from one run seed.
//!
//! Every consumer of randomness (splitting, initialization, corruption,
//! negative sampling, dropout, subgraph sampling) draws from its own
//! ChaCha stream so that changing how much one consumer draws never
//! perturbs the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const CORRUPTION: &str = "corruption";
pub const NEGATIVES: &str = "negatives";
pub const DROPOUT: &str = "dropout";
pub const SUBGRAPH: &str = "subgraph";
pub const SHUFFLE: &str = "shuffle";
pub const EVAL: &str = "eval";

/// Deterministic stream for `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
