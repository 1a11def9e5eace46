//! Alphabets, probability mass functions and their quantization into the
//! integer count tables consumed by the entropy coders.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Symbols are dense indices into an alphabet.
pub type Symbol = usize;

/// Largest supported quantization precision (in bits).
pub const MAX_PRECISION_BITS: u32 = 16;

const PMF_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("alphabet size {0} is too small (need at least 2 symbols)")]
    AlphabetTooSmall(usize),
    #[error("probability vector is empty")]
    Empty,
    #[error("probability {value} at index {index} is negative or not finite")]
    InvalidProbability { index: usize, value: f64 },
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("precision of {0} bits is outside 2..=16")]
    BadPrecision(u32),
    #[error("cannot give each of {size} symbols a nonzero count out of {total}")]
    AlphabetExceedsTotal { size: usize, total: u64 },
    #[error("count for symbol {0} is zero")]
    ZeroCount(usize),
    #[error("value {value} is outside [0, {total})")]
    OutOfRange { value: u64, total: u64 },
    #[error("support mismatch at symbol {0}: p > 0 but q = 0")]
    SupportMismatch(usize),
    #[error("malformed serialized table: {0}")]
    Malformed(&'static str),
}

/// A data alphabet of `size >= 2` dense symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alphabet(usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self, ProbError> {
        if size < 2 {
            return Err(ProbError::AlphabetTooSmall(size));
        }
        Ok(Alphabet(size))
    }

    pub fn size(self) -> usize {
        self.0
    }

    pub fn contains(self, s: Symbol) -> bool {
        s < self.0
    }
}

/// A probability vector over a finite set of symbols.
///
/// Single-entry pmfs are permitted: they appear as latent distributions
/// of a one-valued latent variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, ProbError> {
        if probs.is_empty() {
            return Err(ProbError::Empty);
        }
        let mut sum = 0.0;
        for (index, &value) in probs.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(ProbError::InvalidProbability { index, value });
            }
            sum += value;
        }
        if (sum - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(ProbError::NotNormalized(sum));
        }
        Ok(Pmf { probs })
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0);
        Pmf {
            probs: vec![1.0 / size as f64; size],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: Symbol) -> f64 {
        self.probs[s]
    }
}

/// Integer approximation `counts[i] / total` of a pmf, with cumulative
/// counts `cumulative[i] = sum(counts[..i])`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QuantizedPmf {
    counts: Vec<u32>,
    cumulative: Vec<u32>,
    total: u32,
    precision_bits: Option<u32>,
}

impl QuantizedPmf {
    /// Builds a table from explicit counts with an arbitrary total.
    ///
    /// This is how non-dyadic tables such as `(32, 8, 16, 2, 42)` out of 100
    /// are constructed. The streaming coders reject such tables.
    pub fn from_counts(counts: Vec<u32>) -> Result<Self, ProbError> {
        if counts.is_empty() {
            return Err(ProbError::Empty);
        }
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut acc: u64 = 0;
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(ProbError::ZeroCount(i));
            }
            cumulative.push(acc as u32);
            acc += u64::from(c);
            if acc > u64::from(u32::MAX) {
                return Err(ProbError::Malformed("total exceeds 32 bits"));
            }
        }
        let total = acc as u32;
        let precision_bits = total
            .is_power_of_two()
            .then(|| total.trailing_zeros())
            .filter(|&p| p <= MAX_PRECISION_BITS);
        Ok(QuantizedPmf {
            counts,
            cumulative,
            total,
            precision_bits,
        })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn cumulative(&self) -> &[u32] {
        &self.cumulative
    }

    pub fn count(&self, s: Symbol) -> u32 {
        self.counts[s]
    }

    pub fn cumulative_count(&self, s: Symbol) -> u32 {
        self.cumulative[s]
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    /// `Some(p)` when the total is `2^p` with `p <= 16`.
    pub fn precision_bits(&self) -> Option<u32> {
        self.precision_bits
    }

    /// Probability assigned to `s` by the quantized table.
    pub fn prob(&self, s: Symbol) -> f64 {
        f64::from(self.counts[s]) / f64::from(self.total)
    }

    /// Ideal code length of `s` in bits under this table.
    pub fn info_bits(&self, s: Symbol) -> f64 {
        (f64::from(self.total) / f64::from(self.counts[s])).log2()
    }

    pub fn to_pmf(&self) -> Pmf {
        Pmf {
            probs: (0..self.len()).map(|s| self.prob(s)).collect(),
        }
    }

    /// Serializes as one precision byte followed by little-endian `u16` counts.
    pub fn to_bytes(&self) -> Result<Vec<u8>, ProbError> {
        let precision = self
            .precision_bits
            .ok_or(ProbError::Malformed("only dyadic tables are serializable"))?;
        let mut out = Vec::with_capacity(1 + 2 * self.counts.len());
        out.push(precision as u8);
        for &c in &self.counts {
            let c = u16::try_from(c).map_err(|_| ProbError::Malformed("count exceeds u16"))?;
            out.extend_from_slice(&c.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProbError> {
        let (&precision, rest) = bytes.split_first().ok_or(ProbError::Empty)?;
        if rest.len() % 2 != 0 {
            return Err(ProbError::Malformed("odd count payload"));
        }
        let counts: Vec<u32> = rest
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_le_bytes([c[0], c[1]])))
            .collect();
        let q = Self::from_counts(counts)?;
        if q.precision_bits != Some(u32::from(precision)) {
            return Err(ProbError::Malformed("counts do not sum to 2^precision"));
        }
        Ok(q)
    }
}

#[derive(Debug, Clone, Copy)]
struct Remainder {
    value: f64,
    index: usize,
}

// Max-heap order: larger remainder first, then lower index.
impl Ord for Remainder {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Remainder {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Remainder {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Remainder {}

/// Quantizes `pmf` to counts summing to `2^precision_bits`.
pub fn quantize_pmf(pmf: &Pmf, precision_bits: u32) -> Result<QuantizedPmf, ProbError> {
    if !(2..=MAX_PRECISION_BITS).contains(&precision_bits) {
        return Err(ProbError::BadPrecision(precision_bits));
    }
    let counts = apportion(pmf.probs(), 1u64 << precision_bits)?;
    QuantizedPmf::from_counts(counts)
}

/// Largest-remainder apportionment of `total` units with every count >= 1.
///
/// Shortfall goes to the largest fractional remainders (ties to the lower
/// index); excess created by the `>= 1` clamp is taken from the smallest
/// remainders among counts above one (ties to the lower index).
pub fn apportion(probs: &[f64], total: u64) -> Result<Vec<u32>, ProbError> {
    let n = probs.len();
    if n == 0 {
        return Err(ProbError::Empty);
    }
    if n as u64 > total {
        return Err(ProbError::AlphabetExceedsTotal { size: n, total });
    }
    let scale = total as f64;
    let mut counts = Vec::with_capacity(n);
    let mut remainders = Vec::with_capacity(n);
    let mut assigned: u64 = 0;
    for &p in probs {
        let exact = p * scale;
        let c = (exact.floor() as u64).clamp(1, total);
        assigned += c;
        counts.push(c);
        remainders.push(exact - c as f64);
    }

    match assigned.cmp(&total) {
        Ordering::Less => {
            let mut heap: BinaryHeap<Remainder> = remainders
                .iter()
                .enumerate()
                .map(|(index, &value)| Remainder { value, index })
                .collect();
            for _ in 0..(total - assigned) {
                let mut top = heap.pop().expect("heap holds every symbol");
                counts[top.index] += 1;
                top.value -= 1.0;
                heap.push(top);
            }
        }
        Ordering::Greater => {
            // Negate so the max-heap yields the smallest remainder first.
            let mut heap: BinaryHeap<Remainder> = remainders
                .iter()
                .enumerate()
                .filter(|&(i, _)| counts[i] > 1)
                .map(|(index, &value)| Remainder {
                    value: -value,
                    index,
                })
                .collect();
            for _ in 0..(assigned - total) {
                let mut top = heap.pop().expect("excess implies a count above one");
                counts[top.index] -= 1;
                if counts[top.index] > 1 {
                    top.value -= 1.0;
                    heap.push(top);
                }
            }
        }
        Ordering::Equal => {}
    }
    Ok(counts.into_iter().map(|c| c as u32).collect())
}

/// Returns the symbol `s` with `b_s <= y < b_s + l_s`.
pub fn inverse_cumulative(q: &QuantizedPmf, y: u32) -> Result<Symbol, ProbError> {
    if y >= q.total {
        return Err(ProbError::OutOfRange {
            value: u64::from(y),
            total: u64::from(q.total),
        });
    }
    Ok(q.cumulative.partition_point(|&b| b <= y) - 1)
}

/// Shannon entropy in bits.
pub fn entropy_bits(pmf: &Pmf) -> f64 {
    -pmf.probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>()
}

/// Cross entropy `-sum p_i log2 q_i` in bits.
pub fn cross_entropy_bits(p: &Pmf, q: &Pmf) -> Result<f64, ProbError> {
    if p.len() != q.len() {
        return Err(ProbError::LengthMismatch(p.len(), q.len()));
    }
    let mut acc = 0.0;
    for (i, (&pi, &qi)) in p.probs.iter().zip(&q.probs).enumerate() {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(ProbError::SupportMismatch(i));
            }
            acc -= pi * qi.log2();
        }
    }
    Ok(acc)
}

/// `KL(p || q)` in bits.
pub fn kl_bits(p: &Pmf, q: &Pmf) -> Result<f64, ProbError> {
    Ok(cross_entropy_bits(p, q)? - entropy_bits(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TOY: [f64; 5] = [0.32, 0.08, 0.16, 0.02, 0.42];

    fn toy_table() -> QuantizedPmf {
        let counts = apportion(&TOY, 100).unwrap();
        QuantizedPmf::from_counts(counts).unwrap()
    }

    #[test]
    fn toy_table_matches_published_counts() {
        let q = toy_table();
        assert_eq!(q.counts(), &[32, 8, 16, 2, 42]);
        assert_eq!(q.cumulative(), &[0, 32, 40, 56, 58]);
        assert_eq!(q.total(), 100);
        assert_eq!(q.precision_bits(), None);
    }

    #[test]
    fn uniform_four_symbols() {
        let q = quantize_pmf(&Pmf::uniform(4), 4).unwrap();
        assert_eq!(q.counts(), &[4, 4, 4, 4]);
        assert_eq!(q.cumulative(), &[0, 4, 8, 12]);
        assert_eq!(q.precision_bits(), Some(4));
    }

    #[test]
    fn thirds_break_ties_toward_low_index() {
        let third = 1.0 / 3.0;
        let q = quantize_pmf(&Pmf::new(vec![third, third, third]).unwrap(), 4).unwrap();
        assert_eq!(q.counts(), &[6, 5, 5]);
    }

    #[test]
    fn zero_probability_is_clamped_to_one() {
        let q = quantize_pmf(&Pmf::new(vec![1.0, 0.0, 0.0]).unwrap(), 4).unwrap();
        assert_eq!(q.counts(), &[14, 1, 1]);
    }

    #[test]
    fn alphabet_larger_than_total_is_rejected() {
        let err = quantize_pmf(&Pmf::uniform(5), 2).unwrap_err();
        assert!(matches!(err, ProbError::AlphabetExceedsTotal { size: 5, total: 4 }));
        assert!(matches!(
            quantize_pmf(&Pmf::uniform(2), 17),
            Err(ProbError::BadPrecision(17))
        ));
    }

    #[test]
    fn inverse_cumulative_on_toy_table() {
        let q = toy_table();
        assert_eq!(inverse_cumulative(&q, 38).unwrap(), 1);
        assert_eq!(inverse_cumulative(&q, 0).unwrap(), 0);
        assert_eq!(inverse_cumulative(&q, 99).unwrap(), 4);
        assert!(inverse_cumulative(&q, 100).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy_bits(&Pmf::uniform(2)), 1.0);
        assert_eq!(entropy_bits(&Pmf::new(vec![1.0, 0.0]).unwrap()), 0.0);
        // Direct summation with explicit natural logs as the oracle.
        let oracle: f64 = TOY.iter().map(|p| -p * p.ln()).sum::<f64>() / std::f64::consts::LN_2;
        let h = entropy_bits(&Pmf::new(TOY.to_vec()).unwrap());
        assert!((h - oracle).abs() < 1e-12);
        assert!((h - 1.8791).abs() < 5e-5, "{h}");
    }

    #[test]
    fn cross_entropy_examples() {
        let u4 = Pmf::uniform(4);
        assert!((cross_entropy_bits(&u4, &u4).unwrap() - 2.0).abs() < 1e-12);
        let p = Pmf::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(cross_entropy_bits(&p, &Pmf::uniform(2)).unwrap(), 1.0);
        let toy = Pmf::new(TOY.to_vec()).unwrap();
        let ce = cross_entropy_bits(&toy, &Pmf::uniform(5)).unwrap();
        assert!((ce - 5f64.log2()).abs() < 1e-12);
        assert!(matches!(
            cross_entropy_bits(&Pmf::uniform(2), &p),
            Err(ProbError::SupportMismatch(1))
        ));
    }

    #[test]
    fn pmf_validation() {
        assert!(Pmf::new(vec![0.5, 0.6]).is_err());
        assert!(Pmf::new(vec![-0.1, 1.1]).is_err());
        assert!(Pmf::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Alphabet::new(1).is_err());
        assert_eq!(Alphabet::new(256).unwrap().size(), 256);
    }

    #[test]
    fn serialization_round_trip() {
        let q = quantize_pmf(&Pmf::new(TOY.to_vec()).unwrap(), 12).unwrap();
        let bytes = q.to_bytes().unwrap();
        assert_eq!(bytes[0], 12);
        assert_eq!(bytes.len(), 1 + 2 * 5);
        assert_eq!(QuantizedPmf::from_bytes(&bytes).unwrap(), q);
        assert!(toy_table().to_bytes().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_pmf() -> impl Strategy<Value = Pmf> {
            prop::collection::vec(0.0f64..1.0, 2..64).prop_map(|raw| {
                let s: f64 = raw.iter().sum();
                if s == 0.0 {
                    Pmf::uniform(raw.len())
                } else {
                    Pmf::new(raw.iter().map(|x| x / s).collect()).unwrap()
                }
            })
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(10_000))]
            #[test]
            fn quantized_counts_are_valid(pmf in arb_pmf(), precision in 6u32..=16) {
                let q = quantize_pmf(&pmf, precision).unwrap();
                prop_assert_eq!(q.counts().iter().map(|&c| u64::from(c)).sum::<u64>(), 1u64 << precision);
                prop_assert!(q.counts().iter().all(|&c| c >= 1));
                let mut acc = 0;
                for s in 0..q.len() {
                    prop_assert_eq!(q.cumulative_count(s), acc);
                    acc += q.count(s);
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]
            #[test]
            fn requantizing_exact_rationals_is_identity(pmf in arb_pmf(), precision in 6u32..=16) {
                let q = quantize_pmf(&pmf, precision).unwrap();
                let again = quantize_pmf(&q.to_pmf(), precision).unwrap();
                prop_assert_eq!(again, q);
            }

            #[test]
            fn inverse_cumulative_is_exhaustive(pmf in arb_pmf(), precision in 6u32..=12) {
                let q = quantize_pmf(&pmf, precision).unwrap();
                for s in 0..q.len() {
                    for k in 0..q.count(s) {
                        prop_assert_eq!(inverse_cumulative(&q, q.cumulative_count(s) + k).unwrap(), s);
                    }
                }
            }

            #[test]
            fn kl_is_nonnegative(p in arb_pmf(), seed in any::<u64>()) {
                let n = p.len();
                let raw: Vec<f64> = (0..n).map(|i| ((seed.rotate_left(i as u32) % 997) + 1) as f64).collect();
                let s: f64 = raw.iter().sum();
                let q = Pmf::new(raw.iter().map(|x| x / s).collect()).unwrap();
                prop_assert!(kl_bits(&p, &q).unwrap() >= -1e-12);
                prop_assert!(kl_bits(&p, &p).unwrap().abs() <= 1e-12);
            }
        }
    }
}
