//! Seed derivation for reproducible, independently addressable random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` of a parent seed (SplitMix64 construction).
/// Streams are independent of each other, so adding streams never perturbs
/// existing ones.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    mix64(mix64(seed).wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let s = path.iter().fold(seed, |acc, &p| derive_seed(acc, p));
    ChaCha8Rng::seed_from_u64(s)
}
