//! Seeded source of the initial bits borrowed by bits-back coding.
//!
//! Words are the high 32 bits of successive SplitMix64 outputs:
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! z ^ (z >> 31)
//! ```
//!
//! Chunk `k` starts from `state = seed ^ (k * 0xD1B54A32D192ED03)`, so each
//! chunk draws an independent, reproducible sequence.

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX2: u64 = 0x94D0_49BB_1331_11EB;
const CHUNK_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;

/// Default number of words a single chunk may borrow.
pub const DEFAULT_RESERVOIR_WORDS: usize = 1 << 16;

#[derive(Debug, Clone)]
pub struct Reservoir {
    state: u64,
    drawn: usize,
    capacity: usize,
}

impl Reservoir {
    pub fn new(seed: u64, chunk_index: u64, capacity: usize) -> Self {
        Reservoir {
            state: seed ^ chunk_index.wrapping_mul(CHUNK_STRIDE),
            drawn: 0,
            capacity,
        }
    }

    pub fn for_chunk(seed: u64, chunk_index: u64) -> Self {
        Self::new(seed, chunk_index, DEFAULT_RESERVOIR_WORDS)
    }

    fn splitmix(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(MIX1);
        z = (z ^ (z >> 27)).wrapping_mul(MIX2);
        z ^ (z >> 31)
    }

    /// Next word, or `None` once `capacity` words have been drawn.
    pub fn next_word(&mut self) -> Option<u32> {
        if self.drawn >= self.capacity {
            return None;
        }
        self.drawn += 1;
        Some((self.splitmix() >> 32) as u32)
    }

    pub fn drawn(&self) -> usize {
        self.drawn
    }

    /// Bits borrowed so far.
    pub fn drawn_bits(&self) -> u64 {
        32 * self.drawn as u64
    }

    /// The first `n` words of the sequence for `(seed, chunk_index)`.
    pub fn prefix(seed: u64, chunk_index: u64, n: usize) -> Vec<u32> {
        let mut r = Self::new(seed, chunk_index, n);
        std::iter::from_fn(|| r.next_word()).collect()
    }
}
