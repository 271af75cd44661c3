//! Seed derivation. Every random stream in a run is keyed by a path of
//! integers hashed into the run seed, so streams never overlap and can be
//! regenerated independently of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_TRAIN: u64 = 1;
pub const STREAM_VAL: u64 = 2;
pub const STREAM_TEST: u64 = 3;
pub const STREAM_PARTICIPATION: u64 = 4;
pub const STREAM_INIT: u64 = 5;
pub const STREAM_TASK: u64 = 6;
pub const STREAM_PROBE: u64 = 7;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `base` one component at a time.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
