//! Seeded random streams.
//!
//! Every random quantity comes from a ChaCha8 generator seeded with a
//! 64-bit seed and a fixed stream id, so the measurement noise, the
//! parameter walk and the exogenous input never share draws. Monte-Carlo
//! replicates get their own seed through [`replicate_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream carrying the measurement noise `w(t)`.
pub const STREAM_NOISE: u64 = 0;
/// Stream carrying the parameter-walk innovations.
pub const STREAM_WALK: u64 = 1;
/// Stream carrying randomly generated exogenous inputs.
pub const STREAM_INPUT: u64 = 2;

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// SplitMix64 finalizer, used to derive well-separated replicate seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(replicate as u64))
}

/// `count` independent standard normal draws from `rng`.
pub fn standard_normals(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}
