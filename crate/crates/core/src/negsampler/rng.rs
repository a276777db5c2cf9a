//! Counter-keyed deterministic random streams.
//!
//! Every consumer asks for a stream keyed by `(domain, epoch, ordinal)`. The
//! same seed and key always give the same stream, independent of the order
//! in which streams are requested.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, so unrelated consumers never share a key.
pub mod domain {
    pub const SHUFFLE: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const INIT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const DATA: u64 = 5;
    pub const SPLIT: u64 = 6;
    pub const DEMO: u64 = 7;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerRng {
    seed: u64,
}

impl SamplerRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, domain: u64, epoch: u64, ordinal: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut h = splitmix64(self.seed ^ splitmix64(domain));
        h = splitmix64(h ^ epoch);
        for chunk in key.chunks_exact_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(ordinal);
        rng
    }
}
