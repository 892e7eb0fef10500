//! Deterministic sub-stream seed derivation.
//!
//! Parallel work (simulation runs, search restarts, replicate evaluations)
//! must produce identical results regardless of thread scheduling, so every
//! task derives its own seed from the user seed plus a fixed path of indices
//! and draws from an independent stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a task seed from a base seed and a path of indices.
///
/// Different paths give statistically independent seeds; the same path always
/// gives the same seed.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut s = splitmix64(seed ^ 0x6A09_E667_F3BC_C909);
    for &p in path {
        s = splitmix64(s ^ splitmix64(p.wrapping_add(0x243F_6A88_85A3_08D3)));
    }
    s
}

/// A seeded random stream for the task identified by `path`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}
