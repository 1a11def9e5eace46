//! Range asymmetric numeral systems.
//!
//! [`ExactRans`] applies the textbook push/pop formulas to an unbounded
//! integer and serves as the reference. [`StreamRans`] is the production
//! coder: a 64-bit state renormalized through a stack of 32-bit words.

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use super::CoderError;
use crate::prob::{inverse_cumulative, QuantizedPmf, Symbol};

/// Lower bound of the normalized streaming state interval `[L, 2^64)`.
pub const RANS_L: u64 = 1 << 32;

/// Unbounded rANS state, starting at zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExactRans {
    x: BigUint,
}

impl ExactRans {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_state(x: BigUint) -> Self {
        ExactRans { x }
    }

    pub fn state(&self) -> &BigUint {
        &self.x
    }

    /// `x <- floor(x / l_s) * M + (x mod l_s) + b_s`
    pub fn push(&mut self, q: &QuantizedPmf, s: Symbol) {
        let count = BigUint::from(q.count(s));
        let quotient = &self.x / &count;
        let rem = &self.x % &count;
        self.x = quotient * q.total() + rem + q.cumulative_count(s);
    }

    /// `s = b^-1(x mod M)`, `x <- floor(x / M) * l_s + (x mod M) - b_s`
    pub fn pop(&mut self, q: &QuantizedPmf) -> Symbol {
        let total = BigUint::from(q.total());
        let slot = (&self.x % &total).to_u32().expect("slot below a u32 total");
        let s = inverse_cumulative(q, slot).expect("slot is below the total");
        let quotient = &self.x / &total;
        self.x = quotient * q.count(s) + (slot - q.cumulative_count(s));
        s
    }

    pub fn is_zero(&self) -> bool {
        self.x.is_zero()
    }
}

/// Streaming rANS with a 64-bit state and a stack of 32-bit words.
///
/// Between operations the state stays in `[2^32, 2^64)`. Pushes emit the
/// low word first when the state would otherwise overflow; pops decode and
/// then absorb one word if the state fell below `2^32`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRans {
    x: u64,
    words: Vec<u32>,
}

impl Default for StreamRans {
    fn default() -> Self {
        Self::new()
    }
}

fn dyadic_precision(q: &QuantizedPmf) -> Result<u32, CoderError> {
    q.precision_bits().ok_or(CoderError::NonDyadicTotal(q.total()))
}

impl StreamRans {
    pub fn new() -> Self {
        StreamRans {
            x: RANS_L,
            words: Vec::new(),
        }
    }

    pub fn from_parts(x: u64, words: Vec<u32>) -> Self {
        StreamRans { x, words }
    }

    pub fn state(&self) -> u64 {
        self.x
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn into_parts(self) -> (u64, Vec<u32>) {
        (self.x, self.words)
    }

    pub fn push(&mut self, q: &QuantizedPmf, s: Symbol) -> Result<(), CoderError> {
        let precision = dyadic_precision(q)?;
        if s >= q.len() {
            return Err(CoderError::UnknownSymbol(s));
        }
        let count = u64::from(q.count(s));
        // A count of 2^precision never overflows the state.
        let x_max = ((RANS_L >> precision) << 32).checked_mul(count);
        if x_max.is_some_and(|m| self.x >= m) {
            self.words.push(self.x as u32);
            self.x >>= 32;
        }
        self.x = ((self.x / count) << precision) + self.x % count + u64::from(q.cumulative_count(s));
        Ok(())
    }

    pub fn pop(&mut self, q: &QuantizedPmf) -> Result<Symbol, CoderError> {
        self.pop_with(q, |words| words.pop())
    }

    /// Pops, drawing a refill word from `reservoir` when the word stack is
    /// empty. Used by bits-back coding to borrow initial bits; fails with
    /// [`CoderError::Underflow`] when the reservoir runs dry.
    pub fn pop_or_borrow(
        &mut self,
        q: &QuantizedPmf,
        mut reservoir: impl FnMut() -> Option<u32>,
    ) -> Result<Symbol, CoderError> {
        self.pop_with(q, |words| words.pop().or_else(&mut reservoir))
    }

    fn pop_with(
        &mut self,
        q: &QuantizedPmf,
        mut refill: impl FnMut(&mut Vec<u32>) -> Option<u32>,
    ) -> Result<Symbol, CoderError> {
        let precision = dyadic_precision(q)?;
        let mask = (1u64 << precision) - 1;
        let slot = (self.x & mask) as u32;
        let s = inverse_cumulative(q, slot).expect("slot is below the total");
        self.x = (self.x >> precision) * u64::from(q.count(s)) + u64::from(slot - q.cumulative_count(s));
        if self.x < RANS_L {
            let word = refill(&mut self.words).ok_or(CoderError::Underflow)?;
            self.x = (self.x << 32) | u64::from(word);
        }
        Ok(s)
    }

    /// Total size of the serialized stream in bits (words plus the final
    /// 64-bit state).
    pub fn bit_len(&self) -> u64 {
        32 * self.words.len() as u64 + 64
    }

    /// Serializes as little-endian words followed by the 8-byte state.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 * self.words.len() + 8);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out.extend_from_slice(&self.x.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CoderError> {
        if bytes.len() < 8 || !(bytes.len() - 8).is_multiple_of(4) {
            return Err(CoderError::Truncated);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let x = u64::from_le_bytes(tail.try_into().unwrap());
        let words = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(StreamRans { x, words })
    }
}
