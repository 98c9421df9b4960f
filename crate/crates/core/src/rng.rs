//! Seeding helpers. Every stochastic routine in the crate draws from a
//! ChaCha8 stream so results are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded by `seed`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable content hash of a float vector (bit pattern based, so `-0.0` and
/// `0.0` hash differently).
pub fn hash_f64s(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, v| mix64(acc ^ v.to_bits()))
}

/// Derive a child seed from a parent seed and a key.
pub fn derive(seed: u64, key: u64) -> u64 {
    mix64(seed ^ mix64(key))
}
