//! Seed derivation for reproducible, parallel Monte Carlo.
//!
//! Every stochastic routine takes a caller-owned [`SeededRng`]. Independent
//! streams (η-table nodes, sweep realisations) are derived from a base seed
//! and a list of indices with [`derive_seed`], so any stream can be replayed
//! without running the others.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from `base` and a path of indices:
/// `s ← base; for i in path { s ← splitmix64(s ⊕ splitmix64(i)) }`.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(base), |s, &i| splitmix64(s ^ splitmix64(i)))
}

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(base: u64, path: &[u64]) -> SeededRng {
    rng_from_seed(derive_seed(base, path))
}
