//! Named, deterministic RNG substreams.
//!
//! Every random draw in a run descends from one root seed. A substream is
//! addressed by a name plus a tuple of integer coordinates, e.g.
//! `("fading", [round, client])`. The ChaCha8 seed of a substream is the
//! SHA-256 digest of
//!
//! ```text
//! root_seed (u64 LE) || name bytes || 0x00 || coord_0 (u64 LE) || coord_1 ...
//! ```
//!
//! so streams are independent of evaluation order and of thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

/// Stream names used by the simulator.
pub mod names {
    pub const TOPOLOGY: &str = "topology";
    pub const TRUST: &str = "trust";
    pub const DATA: &str = "data";
    pub const PARTITION: &str = "partition";
    pub const INIT: &str = "init";
    pub const TRAIN: &str = "train";
    pub const FADING: &str = "fading";
    pub const MONTE_CARLO: &str = "montecarlo";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    root: u64,
}

impl Streams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn rng(&self, name: &str, coords: &[u64]) -> SimRng {
        let mut hasher = Sha256::new();
        hasher.update(self.root.to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
        for c in coords {
            hasher.update(c.to_le_bytes());
        }
        let digest: [u8; 32] = hasher.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}
