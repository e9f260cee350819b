//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, purpose, index)`: particle or path
//! `index` of a given `purpose` always sees the same sequence of normals, no
//! matter which thread simulates it. Reusing a purpose across two simulations is
//! how common random numbers are obtained.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Independent stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Brownian noise of interacting particles.
    Particles,
    /// Brownian noise of decoupled (frozen-flow) paths.
    Paths,
    /// Draws of initial particle positions.
    Initial,
    /// Probes used by assumption validation and random test instances.
    Probe,
    /// Anything else, tagged by the caller.
    Custom(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Particles => 1,
            Purpose::Paths => 2,
            Purpose::Initial => 3,
            Purpose::Probe => 4,
            Purpose::Custom(c) => 0x1000 + c as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub seed: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// A policy whose streams are independent of `self`'s (replicates, seeds sweeps).
    pub fn derive(&self, replicate: u64) -> Self {
        Self {
            seed: splitmix(self.seed ^ splitmix(replicate.wrapping_add(0x5eed))),
        }
    }

    pub fn stream(&self, purpose: Purpose, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut state = self.seed ^ splitmix(purpose.tag());
        for chunk in key.chunks_mut(8) {
            state = splitmix(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}
