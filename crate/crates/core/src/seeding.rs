//! Deterministic RNG derivation from structured keys.
//!
//! Every stochastic component (synthetic encoders, matrix sampling, holdout
//! splitting, triplet draws) derives its generator from a SHA-256 digest of
//! length-prefixed key parts, so streams are independent of each other and of
//! scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a ChaCha8 generator from length-prefixed byte parts.
pub fn rng_from_parts(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Convenience for the common `(seed, label, name)` pattern.
pub fn rng_for(seed: u64, label: &str, name: &str) -> ChaCha8Rng {
    rng_from_parts(&[&seed.to_le_bytes(), label.as_bytes(), name.as_bytes()])
}
