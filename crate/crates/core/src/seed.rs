//! Seed derivation and the portable RNG used everywhere in the crate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// The RNG behind every stochastic operation. ChaCha output is specified
/// independently of platform, so seeded runs agree across machines.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent per-operation seed as the first 8 bytes of
/// `sha256(le_bytes(global) || tag)`.
pub fn derive_seed(global: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}
