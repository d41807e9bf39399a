//! Seed derivation for reproducible parallel trials.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` under base seed `base`.
pub fn trial_seed(base: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(base) ^ trial.wrapping_mul(GOLDEN_GAMMA))
}

pub type Rng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}
