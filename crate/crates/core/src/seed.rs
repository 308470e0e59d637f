//! Per-subsystem random streams derived from one master seed.
//!
//! Stream seed = splitmix64(master ⊕ splitmix64(tag)), where `tag` is the
//! stream's fixed index. Each stream is a ChaCha8 generator, so changing how
//! often one subsystem draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Placement = 1,
    Mobility = 2,
    Behavior = 3,
    Learner = 4,
    Consensus = 5,
    Weights = 6,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: Stream) -> u64 {
    splitmix64(master ^ splitmix64(stream as u64))
}

pub fn rng(master: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, stream))
}

/// A stream further split by an index, e.g. one learner stream per agent.
pub fn sub_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(derive(master, stream) ^ splitmix64(index.wrapping_add(1) << 16)))
}
