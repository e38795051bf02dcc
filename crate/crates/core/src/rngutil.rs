//! Seed derivation and RNG stream splitting.
//!
//! Every run derives its per-cell seeds from the master seed with a stable
//! hash, and every trainer splits its cell seed into named streams (init,
//! actions, domains, ...). Streams keep unrelated random decisions from
//! perturbing each other: a regime that never samples a domain consumes
//! nothing from the action stream, so two regimes that differ only in unused
//! bookkeeping stay bit-identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit over a byte string. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut buf = Vec::with_capacity(8 + label.len());
    buf.extend_from_slice(&parent.to_le_bytes());
    buf.extend_from_slice(label.as_bytes());
    fnv1a64(&buf)
}

/// A deterministic RNG seeded from a parent seed and a stream label.
pub fn stream_rng(parent: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, label))
}
