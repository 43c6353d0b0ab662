//! Seed splitting.
//!
//! A run has one master seed. Every consumer of randomness gets its own
//! stream whose seed is `derive_seed(master, label)`:
//!
//! ```text
//! derive_seed(m, label) = splitmix64(m ^ splitmix64(fnv1a64(label)))
//! ```
//!
//! Labels are fixed strings (`"env"`, `"wrapper"`, ...), so adding a new
//! stream never perturbs the existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

pub fn derive_seed(master: u64, label: &str) -> u64 {
    splitmix64(master ^ splitmix64(fnv1a64(label.as_bytes())))
}

/// Seed for the `index`-th item of a stream (episode k, eval round j, ...).
pub fn derive_indexed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-purpose seeds derived from a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub master: u64,
    /// Episode resets of the training environment.
    pub env: u64,
    /// Observation-transform noise during training.
    pub wrapper: u64,
    /// Network initialization.
    pub init: u64,
    /// Exploration and action sampling while interacting.
    pub act: u64,
    /// Mini-batch sampling and stochastic targets inside updates.
    pub update: u64,
    /// Evaluation episodes.
    pub eval: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self {
            master,
            env: derive_seed(master, "env"),
            wrapper: derive_seed(master, "wrapper"),
            init: derive_seed(master, "init"),
            act: derive_seed(master, "act"),
            update: derive_seed(master, "update"),
            eval: derive_seed(master, "eval"),
        }
    }
}
