//! Named random substreams derived from a single run seed.
//!
//! Every random decision in a run is drawn from a stream keyed by
//! `(purpose, round, pass, slot)`, so results do not depend on the order in
//! which slots are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// What a derived stream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Permutation = 2,
    Object = 3,
    Context = 4,
    ContextUpdate = 5,
    Refine = 6,
    Validation = 7,
    Synth = 8,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Root of all randomness for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// 64-bit key for the given coordinates.
    pub fn key(&self, purpose: Purpose, round: u64, pass: u64, slot: u64) -> u64 {
        let mut h = splitmix(self.seed);
        for part in [purpose as u64, round, pass, slot] {
            h = splitmix(h ^ part);
        }
        h
    }

    pub fn rng(&self, purpose: Purpose, round: u64, pass: u64, slot: u64) -> StreamRng {
        StreamRng::seed_from_u64(self.key(purpose, round, pass, slot))
    }
}
