//! Deterministic RNG streams. Every random draw in the library comes from
//! a ChaCha stream derived from a user seed plus a purpose tag and indices,
//! so re-running any pipeline with the same seed reproduces it bit for bit
//! regardless of thread scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives an independent stream from `(seed, tag, indices)`.
pub fn derive_rng(seed: u64, tag: &str, indices: &[u64]) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update([0x1f]);
    hasher.update(tag.as_bytes());
    for ix in indices {
        hasher.update([0x1f]);
        hasher.update(ix.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = derive_rng(7, "sim", &[3]);
        let mut b = derive_rng(7, "sim", &[3]);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
        let mut c = derive_rng(7, "sim", &[4]);
        let mut d = derive_rng(8, "sim", &[3]);
        let mut e = derive_rng(7, "val", &[3]);
        let base = derive_rng(7, "sim", &[3]).random::<u64>();
        assert_ne!(base, c.random::<u64>());
        assert_ne!(base, d.random::<u64>());
        assert_ne!(base, e.random::<u64>());
    }
}
