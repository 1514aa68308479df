//! Deterministic, splittable seeding: every random stream is a ChaCha8
//! generator keyed by `(seed, domain, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const CLOCK: u64 = 1;
pub const THETA: u64 = 2;
pub const MOMENTS: u64 = 3;
pub const SDE: u64 = 4;
pub const QUADRATIC: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ domain) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}
