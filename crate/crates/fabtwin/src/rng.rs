//! Seed plumbing: one root seed, hash-derived child seeds per (label, index).
//!
//! Every stochastic stage draws from its own labeled child so that adding or
//! reordering stages never perturbs unrelated streams. Derivation is a pure
//! function of the inputs (SHA-256, truncated), so runs reproduce across
//! processes and platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Child seed for stream `label`, item `i`. Length-prefixed hashing keeps
    /// (label, i) pairs collision-free up to 64-bit hash collisions.
    pub fn child(&self, label: &str, i: u64) -> RngSeed {
        let mut hasher = Sha256::new();
        hasher.update(self.0.to_le_bytes());
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
        hasher.update(i.to_le_bytes());
        let digest = hasher.finalize();
        let mut eight = [0u8; 8];
        eight.copy_from_slice(&digest[..8]);
        RngSeed(u64::from_le_bytes(eight))
    }

    /// Deterministic generator for this seed.
    pub fn rng(&self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.0)
    }
}
