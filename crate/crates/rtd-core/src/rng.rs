//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from a single `u64` seed through
//! [`derive_seed`]: every consumer (each rollout, each track, each sampling
//! batch) gets its own child seed keyed by a domain string and a counter.
//! Batches therefore produce identical results regardless of thread count or
//! scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from `(base, domain, index)`.
pub fn derive_seed(base: u64, domain: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest >= 8 bytes"))
}

/// A ChaCha stream for the derived child seed.
pub fn child_rng(base: u64, domain: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, domain, index))
}
