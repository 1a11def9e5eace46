//! Entropy coders: Huffman (prefix codes), arithmetic coding (FIFO) and
//! rANS (FILO).

pub mod arith;
pub mod huffman;
pub mod rans;

use thiserror::Error;

pub use arith::{ac_decode_all, ac_encode_all, ac_exact_interval, AcDecoder, AcEncoder};
pub use huffman::HuffmanCodebook;
pub use rans::{ExactRans, StreamRans, RANS_L};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoderError {
    #[error("symbol {0} is not in the alphabet")]
    UnknownSymbol(usize),
    #[error("{0} trailing bits do not form a complete codeword")]
    TrailingBits(usize),
    #[error("a prefix code needs at least two symbols, got {0}")]
    AlphabetTooSmall(usize),
    #[error("bit stream exhausted before the symbol was complete")]
    Exhausted,
    #[error("streaming rANS needs a power-of-two total, got {0}")]
    NonDyadicTotal(u32),
    #[error("rANS word stream underflow")]
    Underflow,
    #[error("rANS payload is truncated")]
    Truncated,
    #[error("code value falls outside the table")]
    Corrupt,
}
