//! Deterministic random streams.
//!
//! Every random decision in the crate is drawn from a [`ChaCha8Rng`]
//! (the 8-round ChaCha stream cipher used as a PRNG, as implemented by
//! `rand_chacha`). Independent streams are keyed by mixing a root seed with
//! a sequence of integer labels through the SplitMix64 finaliser:
//!
//! ```text
//! z = state + 0x9E3779B97F4A7C15
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z = z ^ (z >> 31)
//! ```
//!
//! `derive_seed(root, &[a, b, c])` folds each label into the state in order
//! (`state = splitmix(state ^ label)`), and `stream(root, labels)` seeds a
//! ChaCha8 generator with the result via `SeedableRng::seed_from_u64`.
//! All of this is integer arithmetic, so streams are identical on every
//! platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 output function applied to `state`.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(root), |state, &label| splitmix64(state ^ label))
}

pub fn stream(root: u64, labels: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, labels))
}
