//! Integer arithmetic (range) coder with pending-bit renormalization, plus
//! an exact rational reference for the interval it approximates.

use num_bigint::BigInt;
use num_rational::BigRational;

use super::CoderError;
use crate::prob::{inverse_cumulative, QuantizedPmf, Symbol};

const CODE_BITS: u32 = 32;
const TOP: u64 = 1 << CODE_BITS;
const HALF: u64 = TOP >> 1;
const QUARTER: u64 = TOP >> 2;
const MASK: u64 = TOP - 1;

/// Appends bits most-significant-first into bytes.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bit: bool) {
        let offset = (self.bit_len % 8) as u8;
        if offset == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
        }
        self.bit_len += 1;
    }

    pub fn bit_len(&self) -> u64 {
        self.bit_len
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    padded: u32,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            padded: 0,
        }
    }

    /// Next bit, or zero once the stream is exhausted. Fails once more
    /// padding has been read than a complete code value could need.
    pub fn next_bit(&mut self) -> Result<bool, CoderError> {
        let byte = (self.pos / 8) as usize;
        let bit = match self.bytes.get(byte) {
            Some(&b) => b & (0x80 >> (self.pos % 8)) != 0,
            None => {
                self.padded += 1;
                if self.padded > CODE_BITS {
                    return Err(CoderError::Exhausted);
                }
                false
            }
        };
        self.pos += 1;
        Ok(bit)
    }
}

/// Encoder half of the range coder. `high` is inclusive internally, so the
/// current interval is `[low, high + 1)`.
#[derive(Debug, Clone)]
pub struct AcEncoder {
    low: u64,
    high: u64,
    pending: u64,
    out: BitWriter,
}

impl Default for AcEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl AcEncoder {
    pub fn new() -> Self {
        AcEncoder {
            low: 0,
            high: MASK,
            pending: 0,
            out: BitWriter::new(),
        }
    }

    fn emit(&mut self, bit: bool) {
        self.out.push(bit);
        for _ in 0..self.pending {
            self.out.push(!bit);
        }
        self.pending = 0;
    }

    pub fn encode(&mut self, q: &QuantizedPmf, s: Symbol) -> Result<(), CoderError> {
        if s >= q.len() {
            return Err(CoderError::UnknownSymbol(s));
        }
        let total = u64::from(q.total());
        let start = u64::from(q.cumulative_count(s));
        let end = start + u64::from(q.count(s));
        let span = self.high - self.low + 1;
        self.high = self.low + span * end / total - 1;
        self.low += span * start / total;

        loop {
            if self.high < HALF {
                self.emit(false);
            } else if self.low >= HALF {
                self.emit(true);
                self.low -= HALF;
                self.high -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.pending += 1;
                self.low -= QUARTER;
                self.high -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
        }
        debug_assert!(self.high - self.low + 1 > QUARTER);
        Ok(())
    }

    /// Bits committed so far, counting pending bits.
    pub fn bits_written(&self) -> u64 {
        self.out.bit_len() + self.pending
    }

    /// Emits the disambiguating tail and returns the byte stream.
    pub fn finish(mut self) -> Vec<u8> {
        self.pending += 1;
        let bit = self.low >= QUARTER;
        self.emit(bit);
        self.out.into_bytes()
    }
}

/// Decoder half of the range coder.
#[derive(Debug, Clone)]
pub struct AcDecoder<'a> {
    low: u64,
    high: u64,
    value: u64,
    input: BitReader<'a>,
}

impl<'a> AcDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, CoderError> {
        let mut input = BitReader::new(bytes);
        let mut value = 0;
        for _ in 0..CODE_BITS {
            value = (value << 1) | u64::from(input.next_bit()?);
        }
        Ok(AcDecoder {
            low: 0,
            high: MASK,
            value,
            input,
        })
    }

    pub fn decode(&mut self, q: &QuantizedPmf) -> Result<Symbol, CoderError> {
        let total = u64::from(q.total());
        let span = self.high - self.low + 1;
        let scaled = ((self.value - self.low + 1) * total - 1) / span;
        let s = inverse_cumulative(q, scaled as u32).map_err(|_| CoderError::Corrupt)?;
        let start = u64::from(q.cumulative_count(s));
        let end = start + u64::from(q.count(s));
        self.high = self.low + span * end / total - 1;
        self.low += span * start / total;

        loop {
            if self.high < HALF {
            } else if self.low >= HALF {
                self.low -= HALF;
                self.high -= HALF;
                self.value -= HALF;
            } else if self.low >= QUARTER && self.high < HALF + QUARTER {
                self.low -= QUARTER;
                self.high -= QUARTER;
                self.value -= QUARTER;
            } else {
                break;
            }
            self.low <<= 1;
            self.high = (self.high << 1) | 1;
            self.value = (self.value << 1) | u64::from(self.input.next_bit()?);
        }
        Ok(s)
    }
}

/// Encodes a whole sequence under a single table.
pub fn ac_encode_all(q: &QuantizedPmf, syms: &[Symbol]) -> Result<Vec<u8>, CoderError> {
    let mut enc = AcEncoder::new();
    for &s in syms {
        enc.encode(q, s)?;
    }
    Ok(enc.finish())
}

pub fn ac_decode_all(q: &QuantizedPmf, bytes: &[u8], count: usize) -> Result<Vec<Symbol>, CoderError> {
    let mut dec = AcDecoder::new(bytes)?;
    (0..count).map(|_| dec.decode(q)).collect()
}

/// Exact final interval `[low, high)` after subdividing `[0, 1)` once per
/// symbol, subintervals ordered by symbol index.
pub fn ac_exact_interval(q: &QuantizedPmf, syms: &[Symbol]) -> (BigRational, BigRational) {
    let total = BigInt::from(q.total());
    let mut low = BigRational::from_integer(0.into());
    let mut width = BigRational::from_integer(1.into());
    for &s in syms {
        let start = BigRational::new(BigInt::from(q.cumulative_count(s)), total.clone());
        let size = BigRational::new(BigInt::from(q.count(s)), total.clone());
        low += &width * start;
        width *= size;
    }
    let high = &low + width;
    (low, high)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{quantize_pmf, Pmf};

    fn toy() -> QuantizedPmf {
        QuantizedPmf::from_counts(vec![32, 8, 16, 2, 42]).unwrap()
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn exact_interval_examples() {
        let q = toy();
        assert_eq!(ac_exact_interval(&q, &[4]), (ratio(58, 100), ratio(1, 1)));
        let (lo, hi) = ac_exact_interval(&q, &[4, 2, 1]);
        assert_eq!(lo, ratio(769_504, 1_000_000));
        assert_eq!(hi, ratio(77_488, 100_000));
        let x = ratio(77, 100);
        assert!(lo <= x && x < hi);
        for s in 0..5 {
            let (lo, hi) = ac_exact_interval(&q, &[s]);
            assert_eq!(lo, ratio(q.cumulative_count(s).into(), 100));
            assert_eq!(hi, ratio((q.cumulative_count(s) + q.count(s)).into(), 100));
        }
    }

    #[test]
    fn toy_round_trip_is_fifo() {
        let q = toy();
        let bytes = ac_encode_all(&q, &[4, 2, 1]).unwrap();
        let mut dec = AcDecoder::new(&bytes).unwrap();
        assert_eq!(dec.decode(&q).unwrap(), 4);
        assert_eq!(dec.decode(&q).unwrap(), 2);
        assert_eq!(dec.decode(&q).unwrap(), 1);
    }

    #[test]
    fn binary_alphabet_round_trip() {
        let q = quantize_pmf(&Pmf::new(vec![0.9, 0.1]).unwrap(), 8).unwrap();
        for s in 0..2 {
            let bytes = ac_encode_all(&q, &[s]).unwrap();
            assert_eq!(ac_decode_all(&q, &bytes, 1).unwrap(), [s]);
        }
    }

    #[test]
    fn degenerate_pmf_is_cheap() {
        let q = quantize_pmf(&Pmf::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap(), 16).unwrap();
        let n = 10_000usize;
        let bytes = ac_encode_all(&q, &vec![0; n]).unwrap();
        let m = f64::from(q.total());
        let bound = n as f64 * (m / (m - 3.0)).log2() + 64.0;
        assert!(((bytes.len() * 8) as f64) <= bound, "{} > {bound}", bytes.len() * 8);
        assert_eq!(ac_decode_all(&q, &bytes, n).unwrap(), vec![0; n]);
    }

    #[test]
    fn truncated_stream_is_detected() {
        let q = quantize_pmf(&Pmf::uniform(4), 8).unwrap();
        let mut dec = AcDecoder::new(&[]).unwrap();
        let mut failed = false;
        for _ in 0..64 {
            if dec.decode(&q).is_err() {
                failed = true;
                break;
            }
        }
        assert!(failed);
    }
}
