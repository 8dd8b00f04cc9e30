//! Seed derivation. Every random stream is keyed by a tuple such as
//! `(run seed, epoch, sample index, step)` so results do not depend on
//! batching or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream identifiers.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stream tags, so that e.g. training noise and evaluation noise never
/// share a stream even with equal indices.
pub mod tag {
    pub const INIT: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const TRAIN_NOISE: u64 = 4;
    pub const EVAL_NOISE: u64 = 5;
    pub const VAL_NOISE: u64 = 6;
    pub const RANDOM_PHASES: u64 = 7;
}
