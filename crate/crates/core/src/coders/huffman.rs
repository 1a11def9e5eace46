//! Huffman prefix codes built by repeated merging of the two least probable
//! nodes.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use super::CoderError;
use crate::prob::{Pmf, Symbol};

#[derive(Debug, Clone)]
enum Node {
    Leaf(Symbol),
    Internal { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    prob: f64,
    // Creation order: leaves by symbol index, then internal nodes as made.
    id: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.prob
            .total_cmp(&other.prob)
            .then_with(|| self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

/// Codewords per symbol together with the tree used for decoding.
#[derive(Debug, Clone)]
pub struct HuffmanCodebook {
    codes: Vec<Vec<bool>>,
    nodes: Vec<Node>,
    root: usize,
}

impl HuffmanCodebook {
    /// Builds the code. The less probable node of each merged pair becomes
    /// the right child (bit 1); equal probabilities put the earlier-created
    /// node on the left.
    pub fn build(pmf: &Pmf) -> Result<Self, CoderError> {
        let n = pmf.len();
        if n < 2 {
            return Err(CoderError::AlphabetTooSmall(n));
        }
        let mut nodes: Vec<Node> = (0..n).map(Node::Leaf).collect();
        let mut heap: BinaryHeap<Reverse<Candidate>> = pmf
            .probs()
            .iter()
            .enumerate()
            .map(|(id, &prob)| Reverse(Candidate { prob, id }))
            .collect();

        while heap.len() > 1 {
            let Reverse(first) = heap.pop().unwrap();
            let Reverse(second) = heap.pop().unwrap();
            let (left, right) = if first.prob < second.prob {
                (second, first)
            } else {
                (first, second)
            };
            let id = nodes.len();
            nodes.push(Node::Internal {
                left: left.id,
                right: right.id,
            });
            heap.push(Reverse(Candidate {
                prob: first.prob + second.prob,
                id,
            }));
        }
        let root = heap.pop().unwrap().0.id;

        let mut codes = vec![Vec::new(); n];
        let mut stack = vec![(root, Vec::new())];
        while let Some((id, prefix)) = stack.pop() {
            match nodes[id] {
                Node::Leaf(s) => codes[s] = prefix,
                Node::Internal { left, right } => {
                    let mut l = prefix.clone();
                    l.push(false);
                    let mut r = prefix;
                    r.push(true);
                    stack.push((left, l));
                    stack.push((right, r));
                }
            }
        }
        Ok(HuffmanCodebook { codes, nodes, root })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn code(&self, s: Symbol) -> &[bool] {
        &self.codes[s]
    }

    /// Codeword rendered as a string of `0`/`1`.
    pub fn code_string(&self, s: Symbol) -> String {
        bits_to_string(&self.codes[s])
    }

    pub fn code_lengths(&self) -> Vec<usize> {
        self.codes.iter().map(Vec::len).collect()
    }

    pub fn encode(&self, syms: &[Symbol]) -> Result<Vec<bool>, CoderError> {
        let mut out = Vec::new();
        for &s in syms {
            let code = self.codes.get(s).ok_or(CoderError::UnknownSymbol(s))?;
            out.extend_from_slice(code);
        }
        Ok(out)
    }

    pub fn decode(&self, bits: &[bool]) -> Result<Vec<Symbol>, CoderError> {
        let mut out = Vec::new();
        let mut node = self.root;
        let mut pending = 0usize;
        for &bit in bits {
            if let Node::Internal { left, right } = self.nodes[node] {
                node = if bit { right } else { left };
                pending += 1;
            }
            if let Node::Leaf(s) = self.nodes[node] {
                out.push(s);
                node = self.root;
                pending = 0;
            }
        }
        if pending != 0 {
            return Err(CoderError::TrailingBits(pending));
        }
        Ok(out)
    }
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Parses a `0`/`1` string; any other character is rejected.
pub fn bits_from_str(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: [f64; 5] = [0.32, 0.08, 0.16, 0.02, 0.42];

    fn toy() -> HuffmanCodebook {
        HuffmanCodebook::build(&Pmf::new(TOY.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn toy_codebook() {
        let cb = toy();
        let codes: Vec<String> = (0..5).map(|s| cb.code_string(s)).collect();
        assert_eq!(codes, ["00", "0110", "010", "0111", "1"]);
    }

    #[test]
    fn toy_sequences() {
        let cb = toy();
        assert_eq!(bits_to_string(&cb.encode(&[4, 2, 1]).unwrap()), "10100110");
        assert!(cb.encode(&[]).unwrap().is_empty());
        assert_eq!(bits_to_string(&cb.encode(&[0, 0]).unwrap()), "0000");
        assert_eq!(cb.decode(&bits_from_str("10100110").unwrap()).unwrap(), [4, 2, 1]);
        assert!(cb.decode(&[]).unwrap().is_empty());
        assert_eq!(cb.decode(&bits_from_str("0111").unwrap()).unwrap(), [3]);
    }

    #[test]
    fn symmetric_pair() {
        let cb = HuffmanCodebook::build(&Pmf::uniform(2)).unwrap();
        assert_eq!(cb.code_string(0), "0");
        assert_eq!(cb.code_string(1), "1");
    }

    #[test]
    fn errors() {
        let cb = toy();
        assert!(matches!(cb.encode(&[5]), Err(CoderError::UnknownSymbol(5))));
        assert!(matches!(
            cb.decode(&bits_from_str("011").unwrap()),
            Err(CoderError::TrailingBits(3))
        ));
        assert!(HuffmanCodebook::build(&Pmf::uniform(1)).is_err());
    }

    #[test]
    fn prefix_free_and_full() {
        let cb = toy();
        let kraft: f64 = cb.code_lengths().iter().map(|&l| 0.5f64.powi(l as i32)).sum();
        assert_eq!(kraft, 1.0);
        for a in 0..5 {
            for b in 0..5 {
                if a != b {
                    assert!(!cb.code(b).starts_with(cb.code(a)));
                }
            }
        }
    }
}
