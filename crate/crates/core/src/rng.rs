//! Counter-based random streams: one generator per `(trajectory, step)`
//! derived from a base seed, so any increment can be regenerated in isolation
//! and trajectories can run in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn trajectory_seed(base_seed: u64, trajectory: u64) -> u64 {
    mix64(mix64(base_seed) ^ mix64(trajectory.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn step_rng(base_seed: u64, trajectory: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trajectory_seed(base_seed, trajectory));
    rng.set_stream(step);
    rng
}

pub fn fill_standard_normal(rng: &mut impl Rng, out: &mut [f64]) {
    for v in out {
        *v = rng.sample(StandardNormal);
    }
}
