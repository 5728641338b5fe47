//! Deterministic seed derivation for independent random streams.
//!
//! Every Monte Carlo consumer draws from its own ChaCha8 stream whose seed is
//! a mix of the user seed and a small set of stream coordinates (path index,
//! purpose tag, parameter hash). Results are therefore independent of thread
//! scheduling and of the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with stream coordinates into a new 64-bit seed.
pub fn derive_seed(base: u64, coordinates: &[u64]) -> u64 {
    coordinates
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Hash of a parameter tuple, by bit pattern.
pub fn hash_f64s(values: &[f64]) -> u64 {
    values
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |acc, v| splitmix64(acc ^ v.to_bits()))
}

pub fn stream(base: u64, coordinates: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, coordinates))
}

/// Uniform in [0, 1) from a hashed counter; used where a draw must not
/// consume the main noise stream.
pub fn counter_uniform(base: u64, coordinates: &[u64]) -> f64 {
    (derive_seed(base, coordinates) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
