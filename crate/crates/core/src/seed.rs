//! Seed derivation for per-item random streams.
//!
//! Every unit of work (a document, a record, a dataset shuffle) draws from its
//! own stream keyed by `(master_seed, label, key)`, so results never depend on
//! scheduling order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Deterministic RNG type used across the crate.
pub type StreamRng = ChaCha8Rng;

/// Derive a 64-bit seed from the master seed and a sequence of key parts.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for part in parts {
        hasher.update([0x1f]);
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stream(master: u64, parts: &[&str]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, parts))
}

/// Hex-encoded truncated SHA-256 of the given parts, used for content ids.
pub fn content_id(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}
