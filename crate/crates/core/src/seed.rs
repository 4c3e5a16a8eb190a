//! Keyed random streams.
//!
//! Every draw in the library comes from a [`SeedStream`], a 256-bit key
//! derived by hashing a master seed together with a path of purpose tags and
//! indices. Two streams with different paths are unrelated, and a stream
//! always yields the same sequence no matter which thread consumes it or in
//! what order sibling streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, PartialEq, Eq)]
pub struct SeedStream {
    key: [u8; 32],
}

impl std::fmt::Debug for SeedStream {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SeedStream({})", &hex::encode(self.key)[..16])
    }
}

impl SeedStream {
    pub fn new(master_seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"pacile/seed/v1");
        hasher.update(master_seed.to_le_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    /// Child stream for a named purpose, e.g. `"grad"` or `"a_hat"`.
    pub fn derive(&self, tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(b"/tag/");
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    /// Child stream for the `index`-th draw of a purpose (iteration, replicate, cell).
    pub fn at(&self, index: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(b"/index/");
        hasher.update(index.to_le_bytes());
        Self {
            key: hasher.finalize().into(),
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(self.key)
    }

    pub fn fingerprint(&self) -> String {
        hex::encode(self.key)
    }
}
