//! Named random sub-streams derived from one master seed.
//!
//! Each stream is keyed by `(master, name, index)` through SHA-256, so adding
//! environments or consumers never reshuffles unrelated streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Seeds {
    master: u64,
}

impl Seeds {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    fn digest(&self, name: &str, index: u64) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.master.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(index.to_le_bytes());
        h.finalize().into()
    }

    pub fn stream(&self, name: &str, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.digest(name, index))
    }

    /// A derived integer seed, e.g. for network initialization.
    pub fn derive(&self, name: &str, index: u64) -> u64 {
        u64::from_le_bytes(self.digest(name, index)[..8].try_into().unwrap())
    }
}
