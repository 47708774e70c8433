//! Seed fan-out.
//!
//! One global seed is expanded into independent sub-seeds by hashing it
//! together with a list of labels (dataset id, model name, config id, ...).
//! Sub-seeds depend only on their labels, never on scheduling order, so
//! parallel and sequential runs see the same random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Counter-based generator used for every random draw in the crate.
pub type Rng = ChaCha8Rng;

pub fn derive_seed(seed: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    for label in labels {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        hasher.update((label.len() as u64).to_le_bytes());
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
