//! Seeded, portable random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from `(seed, stream)`, so switching one component on or off never
//! shifts the draws seen by another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream identifiers used by the training loop and generators.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const PATCHES: u64 = 3;
    pub const SDIR_MASK: u64 = 4;
    pub const CADE_KERNEL: u64 = 5;
    pub const DATA: u64 = 6;
    pub const TASK: u64 = 7;
}

fn keyed(seed: u64, stream: u64, substream: Option<u64>) -> Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    if let Some(sub) = substream {
        key[8..16].copy_from_slice(&sub.to_le_bytes());
        key[16] = 1;
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> Rng {
    keyed(seed, stream, None)
}

/// Generator for `(seed, stream)` with a further `substream` index
/// (per-sample or per-step draws).
pub fn substream(seed: u64, stream: u64, substream: u64) -> Rng {
    keyed(seed, stream, Some(substream))
}
