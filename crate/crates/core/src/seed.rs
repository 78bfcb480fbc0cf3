//! Stable seed derivation.
//!
//! Every random stream in a run is keyed by `(master seed, role tag,
//! indices)`, so results do not depend on how work is scheduled across
//! threads. The mixing function is SplitMix64, which is fixed here rather
//! than borrowed from `std::hash` (whose output is not stable across
//! releases).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    // separator so ("ab", [1]) and ("a", [b'b', 1]) cannot collide
    h = splitmix64(h ^ 0xFF);
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
