//! Small deterministic hashing and draw helpers shared across modules.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Uniform draw in [0, 1) that depends only on `(seed, key, stream)`.
pub fn keyed_unit(seed: u64, key: &str, stream: &str) -> f64 {
    let mut material = seed.to_le_bytes().to_vec();
    material.extend_from_slice(key.as_bytes());
    material.push(0);
    material.extend_from_slice(stream.as_bytes());
    ChaCha8Rng::seed_from_u64(fnv1a64(&material)).random::<f64>()
}

/// Fractional part of the FNV-1a hash of `key`, in [0, 1).
pub fn hash_fraction(key: &str) -> f64 {
    (fnv1a64(key.as_bytes()) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn round_to(x: f64, places: i32) -> f64 {
    let k = 10f64.powi(places);
    (x * k).round() / k
}
