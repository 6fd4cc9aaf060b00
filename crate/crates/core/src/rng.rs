//! Seed derivation. Every random stage draws from its own ChaCha stream keyed by
//! `(seed, stream)`, so stages never share state and results do not depend on
//! the order in which seeds are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    let mut h = splitmix64(seed);
    for b in stream.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

pub fn stream_rng(seed: u64, stream: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
