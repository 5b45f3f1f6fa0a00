// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic RNG streams.
//!
//! Every randomized routine in the crate draws from a ChaCha stream
//! keyed by a user seed plus a small list of integer tags (replicate
//! index, segment bounds, purpose). Streams are independent of
//! scheduling: a replicate's draws depend only on its tags, never on
//! which worker ran first.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche for key folding.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `seed` and `tags` into a single 64-bit stream key.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    let mut state = mix(seed);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    state
}

/// Derives an independent, reproducible RNG from `seed` and `tags`.
pub fn stream_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

/// Purpose tags keeping unrelated streams apart even for equal seeds.
pub(crate) mod tag {
    pub const PERMUTATION: u64 = 0x7065_726d; // "perm"
    pub const NOISE: u64 = 0x6e6f_6973; // "nois"
    pub const OUTLIER: u64 = 0x6f75_746c; // "outl"
    pub const BANDWIDTH: u64 = 0x6261_6e64; // "band"
}
