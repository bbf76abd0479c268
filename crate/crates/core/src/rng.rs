//! Seeded per-pulse random substreams.
//!
//! A session seed and a [`Purpose`] label are mixed through SplitMix64 into a
//! 256-bit ChaCha8 key. Pulse `k` then uses ChaCha stream number `k` under
//! that key, so every pulse draws from its own independent sequence and the
//! result for pulse `k` never depends on how many numbers other pulses used
//! or in which order pulses were processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which part of the simulation a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    AliceChoice,
    Eavesdropper,
    BobDetection,
    PhaseJitter,
    QberSample,
    Profile,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::AliceChoice => 0x616c_6963_6500_0001,
            Purpose::Eavesdropper => 0x6576_6500_0000_0002,
            Purpose::BobDetection => 0x626f_6200_0000_0003,
            Purpose::PhaseJitter => 0x6a69_7474_6572_0004,
            Purpose::QberSample => 0x7162_6572_0000_0005,
            Purpose::Profile => 0x7072_6f66_696c_0006,
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of all randomness in a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngHandle {
    pub seed: u64,
}

impl RngHandle {
    pub fn new(seed: u64) -> Self {
        RngHandle { seed }
    }

    /// Per-pulse stream family for one purpose.
    pub fn streams(&self, purpose: Purpose) -> StreamFamily {
        let mut state = self.seed ^ purpose.tag();
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        StreamFamily { key }
    }

    /// A single session-level stream (stream number `u64::MAX` of the family,
    /// which no pulse index reaches in practice).
    pub fn session_stream(&self, purpose: Purpose) -> ChaCha8Rng {
        self.streams(purpose).for_pulse(u64::MAX)
    }
}

#[derive(Debug, Clone)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    pub fn for_pulse(&self, pulse_idx: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(pulse_idx);
        rng
    }
}

/// Seed for the `index`-th run of a sweep.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}
