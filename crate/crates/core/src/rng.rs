//! Counter-based random streams.
//!
//! Every event gets its own ChaCha stream addressed by `(master_seed, domain,
//! event_index)`, so results never depend on how events are split across
//! workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Per-event generator type used throughout the crate.
pub type EventRng = ChaCha8Rng;

/// A family of reproducible substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    pub fn new(master_seed: u64) -> Self {
        Self::with_domain(master_seed, 0)
    }

    /// Independent family for a named sub-experiment sharing the master seed.
    pub fn with_domain(master_seed: u64, domain: u64) -> Self {
        let mut state = master_seed ^ domain.wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { key }
    }

    /// Derive a child family, e.g. one per preset.
    pub fn child(&self, label: &str) -> Self {
        let mut h = u64::from_le_bytes(self.key[..8].try_into().unwrap());
        for b in label.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3);
        }
        Self::with_domain(h, 0x5EED)
    }

    pub fn stream(&self, index: u64) -> EventRng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
