//! Counter-based random streams.
//!
//! A stream is identified by a master seed plus a path of integers
//! (phase, group, step, purpose, ...). The ChaCha key is derived from the
//! whole path, so two streams with different paths never share state and
//! draws do not depend on the order in which streams are consumed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream purposes used in paths. Kept as constants so every call site
/// names the same slot the same way.
pub mod purpose {
    pub const USER_PERMUTATION: u64 = 1;
    pub const SGD_ORDER: u64 = 2;
    pub const SCORE_NOISE: u64 = 3;
    pub const INCLUSION: u64 = 4;
    pub const OUTPUT_NOISE: u64 = 5;
    pub const MINIBATCH: u64 = 6;
    pub const THRESHOLD_NOISE: u64 = 7;
    pub const GRADIENT_NOISE: u64 = 8;
    pub const SMOOTHING: u64 = 9;
    pub const DATA: u64 = 10;
    pub const TRIAL: u64 = 11;
    pub const ORACLE: u64 = 12;
    pub const PHASE: u64 = 13;
    pub const STEP: u64 = 14;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RngStream {
    master_seed: u64,
    path: Vec<u64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            path: Vec::new(),
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Derive the sub-stream at `self.path ++ [index]`.
    pub fn child(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    /// Derive a sub-stream several levels down.
    pub fn descend(&self, indices: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        Self {
            master_seed: self.master_seed,
            path,
        }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed;
        let mut acc = splitmix64(&mut state);
        // Length is folded in so that [a] and [a, 0] differ.
        for &p in self.path.iter().chain(std::iter::once(&(self.path.len() as u64))) {
            state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ acc;
            acc = splitmix64(&mut state);
        }
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.key())
    }

    /// A master seed for a nested computation, taken from this stream.
    pub fn rng_seed(&self) -> u64 {
        self.rng().next_u64()
    }
}
