//! Stable seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` keyed by a SHA-256 digest
//! of a base seed and a list of tags, so streams are independent of iteration
//! order, thread scheduling, and platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn derive_seed(base: u64, tags: &[&[u8]]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(base.to_le_bytes());
    for tag in tags {
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag);
    }
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

pub fn rng_for(base: u64, tags: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(base, tags))
}

pub fn sub_seed(base: u64, tags: &[&[u8]]) -> u64 {
    let full = derive_seed(base, tags);
    u64::from_le_bytes(full[..8].try_into().unwrap())
}
