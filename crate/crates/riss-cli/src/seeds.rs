//! Labeled sub-seed derivation: every stochastic step hashes the master seed
//! with its own label so runs stay reproducible and steps stay independent.

use sha2::{Digest, Sha256};

pub fn sub_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
