//! Deterministic RNG stream derivation.
//!
//! Every random decision in a run draws from a stream derived from the run
//! seed plus a path of labels (stage tag, iteration index, slot index).
//! Distinct paths give independent streams, so one stage can change how many
//! draws it makes without disturbing any other stage.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One step of the path: an integer index or a stage name.
pub trait SeedLabel {
    fn fold(&self, state: u64) -> u64;
}

impl SeedLabel for u64 {
    fn fold(&self, state: u64) -> u64 {
        splitmix64(state ^ splitmix64(self.wrapping_add(0x51ed_270b)))
    }
}

impl SeedLabel for usize {
    fn fold(&self, state: u64) -> u64 {
        (*self as u64).fold(state)
    }
}

impl SeedLabel for u32 {
    fn fold(&self, state: u64) -> u64 {
        (*self as u64).fold(state)
    }
}

impl SeedLabel for i32 {
    fn fold(&self, state: u64) -> u64 {
        (*self as u64).fold(state)
    }
}

impl SeedLabel for &str {
    fn fold(&self, state: u64) -> u64 {
        // tag separates the string space from the integer space, then fold
        // bytes in 8-byte little-endian chunks with the length mixed in
        let mut h = splitmix64(state ^ 0x7374_7200_0000_0000);
        for chunk in self.as_bytes().chunks(8) {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            h = splitmix64(h ^ u64::from_le_bytes(word));
        }
        splitmix64(h ^ self.len() as u64)
    }
}

/// A point in the seed tree. `child` descends by one label, `rng` opens a
/// ChaCha8 stream at the current point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPath {
    state: u64,
}

impl SeedPath {
    pub fn new(run_seed: u64) -> Self {
        SeedPath {
            state: splitmix64(run_seed),
        }
    }

    pub fn child<L: SeedLabel>(&self, label: L) -> Self {
        SeedPath {
            state: label.fold(self.state),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.state)
    }
}
