//! Deterministic seed splitting.
//!
//! Every random stream is derived from one user seed with
//! `derive_seed(parent, name, index) = splitmix64(parent ^ fnv1a64(name) ^ splitmix64(index))`.
//! Streams for different `(name, index)` pairs are statistically independent
//! and do not depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, name: &str, index: u64) -> u64 {
    splitmix64(parent ^ fnv1a64(name.as_bytes()) ^ splitmix64(index))
}

pub fn stream(parent: u64, name: &str, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(parent, name, index))
}
