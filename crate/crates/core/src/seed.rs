//! Deterministic RNG streams keyed by structured coordinates.
//!
//! Each stream is seeded by SHA-256 over the master seed and a list of
//! length-prefixed parts, so adding a question, budget or trial never shifts
//! the randomness of any other cell.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone)]
pub struct StreamSeed {
    hasher: Sha256,
}

impl StreamSeed {
    pub fn new(master_seed: u64) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"cdg-stream-v1");
        let mut s = Self { hasher };
        s.push(b'u', &master_seed.to_le_bytes());
        s
    }

    fn push(&mut self, tag: u8, bytes: &[u8]) {
        self.hasher.update([tag]);
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
    }

    pub fn text(mut self, part: &str) -> Self {
        self.push(b's', part.as_bytes());
        self
    }

    pub fn index(mut self, part: u64) -> Self {
        self.push(b'u', &part.to_le_bytes());
        self
    }

    pub fn bytes(self) -> [u8; 32] {
        self.hasher.finalize().into()
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.bytes())
    }
}
