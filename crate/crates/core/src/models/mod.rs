//! Desk-scale probabilistic models with exact likelihoods and gradients.

pub mod checkpoint;
pub mod context;
pub mod vae;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use context::{ContextModel, ContextOrder};
pub use vae::ToyVae;

use crate::checksum::params_checksum;
use crate::prob::{kl_bits, quantize_pmf, Pmf, ProbError, QuantizedPmf, Symbol};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model dimensions: {0}")]
    BadDimensions(&'static str),
    #[error("parameters must be finite")]
    NonFinite,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("symbol {0} is outside the model alphabet")]
    SymbolOutOfRange(Symbol),
    #[error(transparent)]
    Quantize(#[from] ProbError),
}

/// Max-subtracted softmax with a fixed left-to-right summation order.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let mut sum = 0.0;
    for &e in &out {
        sum += e;
    }
    for e in &mut out {
        *e /= sum;
    }
    out
}

/// Derivative of an objective with respect to a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(Vec<f64>);

impl Gradient {
    pub fn new(values: Vec<f64>) -> Self {
        Gradient(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

/// Any model the pipeline can code with and adapt.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Context(ContextModel),
    Vae(ToyVae),
}

impl Model {
    pub fn params(&self) -> &[f64] {
        match self {
            Model::Context(m) => m.logits(),
            Model::Vae(m) => m.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Model::Context(m) => m.logits_mut(),
            Model::Vae(m) => m.params_mut(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    pub fn alphabet_size(&self) -> usize {
        match self {
            Model::Context(m) => m.alphabet_size(),
            Model::Vae(m) => m.alphabet_size(),
        }
    }

    pub fn checksum(&self) -> u64 {
        params_checksum(self.params())
    }

    /// Training objective in bits per symbol: NLL for context models,
    /// negative ELBO for the VAE.
    pub fn loss_bits(&self, batch: &[Symbol]) -> Result<f64, ModelError> {
        match self {
            Model::Context(m) => m.nll_bits(batch),
            Model::Vae(m) => m.mean_elbo_bits(batch),
        }
    }

    pub fn gradient(&self, batch: &[Symbol]) -> Result<Gradient, ModelError> {
        match self {
            Model::Context(m) => m.grad_nll(batch),
            Model::Vae(m) => m.grad_elbo(batch),
        }
    }

    /// Sum over the symbols of `batch` of `KL(p ‖ p̄)` between each
    /// distribution that codes the symbol and its quantized table, in bits.
    pub fn quantization_kl_bits(&self, batch: &[Symbol], precision_bits: u32, bits_back: bool) -> Result<f64, ModelError> {
        let kl = |p: &Pmf| -> Result<f64, ModelError> { Ok(kl_bits(p, &quantize_pmf(p, precision_bits)?.to_pmf())?) };
        match self {
            Model::Context(m) => {
                let mut per_row: Vec<Option<f64>> = vec![None; m.rows()];
                let mut total = 0.0;
                for i in 0..batch.len() {
                    let row = m.row_index_at(batch, i);
                    let v = match per_row[row] {
                        Some(v) => v,
                        None => {
                            let v = kl(&m.pmf_for_context(m.context_at(batch, i)))?;
                            per_row[row] = Some(v);
                            v
                        }
                    };
                    total += v;
                }
                Ok(total)
            }
            Model::Vae(m) if bits_back => {
                let prior = kl(&m.prior_pmf())?;
                let lik = (0..m.latent_size())
                    .map(|z| kl(&m.likelihood_pmf(z)))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut total = 0.0;
                for &x in batch {
                    let q = m.posterior_probs(x);
                    total += prior + kl(&m.posterior_pmf(x))?;
                    total += q.iter().zip(&lik).map(|(qz, l)| qz * l).sum::<f64>();
                }
                Ok(total)
            }
            Model::Vae(m) => Ok(kl(&m.marginal_pmf())? * batch.len() as f64),
        }
    }

    /// Quantized tables needed to code `batch`.
    ///
    /// Context models yield one table per visited context; a VAE yields its
    /// marginal, or with `bits_back` the prior, every likelihood row and
    /// every posterior row.
    pub fn coding_tables(&self, batch: &[Symbol], precision_bits: u32, bits_back: bool) -> Result<CodingTables, ModelError> {
        if let Some(&s) = batch.iter().find(|&&s| s >= self.alphabet_size()) {
            return Err(ModelError::SymbolOutOfRange(s));
        }
        match self {
            Model::Context(m) => {
                let mut slot_of_row: Vec<Option<usize>> = vec![None; m.rows()];
                let mut tables = Vec::new();
                let mut positions = Vec::with_capacity(batch.len());
                for i in 0..batch.len() {
                    let row = m.row_index_at(batch, i);
                    let slot = match slot_of_row[row] {
                        Some(slot) => slot,
                        None => {
                            tables.push(quantize_pmf(&m.pmf_for_context(m.context_at(batch, i)), precision_bits)?);
                            slot_of_row[row] = Some(tables.len() - 1);
                            tables.len() - 1
                        }
                    };
                    positions.push(slot);
                }
                if tables.is_empty() {
                    tables.push(quantize_pmf(&m.pmf_for_context(None), precision_bits)?);
                }
                Ok(CodingTables::Positional { tables, positions })
            }
            Model::Vae(m) if bits_back => Ok(CodingTables::BitsBack(VaeTables {
                prior: quantize_pmf(&m.prior_pmf(), precision_bits)?,
                likelihood: (0..m.latent_size())
                    .map(|z| quantize_pmf(&m.likelihood_pmf(z), precision_bits))
                    .collect::<Result<_, _>>()?,
                posterior: (0..m.alphabet_size())
                    .map(|x| quantize_pmf(&m.posterior_pmf(x), precision_bits))
                    .collect::<Result<_, _>>()?,
            })),
            Model::Vae(m) => Ok(CodingTables::Positional {
                tables: vec![quantize_pmf(&m.marginal_pmf(), precision_bits)?],
                positions: vec![0; batch.len()],
            }),
        }
    }
}

/// Quantized tables computed on demand, one per context, for coders that
/// learn the context only as symbols are decoded.
#[derive(Debug)]
pub enum TableSource<'a> {
    Context {
        model: &'a ContextModel,
        precision_bits: u32,
        rows: Vec<Option<QuantizedPmf>>,
    },
    Marginal(QuantizedPmf),
    BitsBack(VaeTables),
}

impl<'a> TableSource<'a> {
    pub fn new(model: &'a Model, precision_bits: u32, bits_back: bool) -> Result<Self, ModelError> {
        Ok(match model {
            Model::Context(m) => TableSource::Context {
                model: m,
                precision_bits,
                rows: vec![None; m.rows()],
            },
            Model::Vae(_) => match model.coding_tables(&[], precision_bits, bits_back)? {
                CodingTables::BitsBack(t) => TableSource::BitsBack(t),
                CodingTables::Positional { mut tables, .. } => TableSource::Marginal(tables.swap_remove(0)),
            },
        })
    }

    /// Table for the symbol at position `i` of `batch`; only `batch[..i]`
    /// is inspected.
    pub fn table_at(&mut self, batch: &[Symbol], i: usize) -> Result<&QuantizedPmf, ModelError> {
        match self {
            TableSource::Context {
                model,
                precision_bits,
                rows,
            } => {
                let ctx = model.context_at(batch, i);
                let row = model.row_for(ctx);
                if rows[row].is_none() {
                    rows[row] = Some(quantize_pmf(&model.pmf_for_context(ctx), *precision_bits)?);
                }
                Ok(rows[row].as_ref().unwrap())
            }
            TableSource::Marginal(q) => Ok(q),
            TableSource::BitsBack(_) => panic!("bits-back tables are not positional"),
        }
    }

    pub fn vae_tables(&self) -> Option<&VaeTables> {
        match self {
            TableSource::BitsBack(t) => Some(t),
            _ => None,
        }
    }
}

/// Quantized `p̄(z)`, `p̄(x|z)` and `q̄(z|x)` of a [`ToyVae`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaeTables {
    pub prior: QuantizedPmf,
    pub likelihood: Vec<QuantizedPmf>,
    pub posterior: Vec<QuantizedPmf>,
}

impl VaeTables {
    /// Expected net bits of bits-back coding `x`:
    /// `sum_z q̄(z|x) (log2 q̄(z|x) - log2 p̄(x|z) - log2 p̄(z))`.
    pub fn ideal_bits(&self, x: Symbol) -> f64 {
        let post = &self.posterior[x];
        (0..post.len())
            .map(|z| {
                let qz = post.prob(z);
                qz * (self.likelihood[z].info_bits(x) + self.prior.info_bits(z) - post.info_bits(z))
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodingTables {
    /// Distinct tables plus, for each batch position, the index of the
    /// table that codes it.
    Positional {
        tables: Vec<QuantizedPmf>,
        positions: Vec<usize>,
    },
    BitsBack(VaeTables),
}

impl CodingTables {
    pub fn table_at(&self, i: usize) -> &QuantizedPmf {
        match self {
            CodingTables::Positional { tables, positions } => &tables[positions[i]],
            CodingTables::BitsBack(_) => panic!("bits-back tables are not positional"),
        }
    }

    /// Ideal code length of `batch` under the quantized tables, in bits.
    pub fn ideal_bits(&self, batch: &[Symbol]) -> f64 {
        match self {
            CodingTables::Positional { .. } => batch
                .iter()
                .enumerate()
                .map(|(i, &s)| self.table_at(i).info_bits(s))
                .sum(),
            CodingTables::BitsBack(t) => batch.iter().map(|&x| t.ideal_bits(x)).sum(),
        }
    }

    /// Concatenated serialized tables, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let tables: Vec<&QuantizedPmf> = match self {
            CodingTables::Positional { tables, .. } => tables.iter().collect(),
            CodingTables::BitsBack(t) => std::iter::once(&t.prior)
                .chain(&t.likelihood)
                .chain(&t.posterior)
                .collect(),
        };
        let mut out = Vec::new();
        for q in tables {
            match q.to_bytes() {
                Ok(bytes) => out.extend(bytes),
                // Single-symbol latent tables hold a count of 2^precision.
                Err(_) => out.extend(q.counts().iter().flat_map(|c| c.to_le_bytes())),
            }
        }
        if let CodingTables::Positional { positions, .. } = self {
            out.extend(positions.iter().flat_map(|&p| (p as u32).to_le_bytes()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_is_shift_invariant() {
        let a = softmax(&[0.1, -2.0, 3.5, 0.0]);
        let b = softmax(&[100.1, 98.0, 103.5, 100.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_order_zero_tables() {
        let m = Model::Context(ContextModel::uniform(ContextOrder::Zero, 4).unwrap());
        let t = m.coding_tables(&[0, 1, 2, 3, 0], 4, false).unwrap();
        match &t {
            CodingTables::Positional { tables, positions } => {
                assert_eq!(tables.len(), 1);
                assert_eq!(tables[0].counts(), &[4, 4, 4, 4]);
                assert_eq!(positions, &[0; 5]);
            }
            CodingTables::BitsBack(_) => unreachable!(),
        }
        assert_eq!(t.ideal_bits(&[0, 1, 2, 3, 0]), 10.0);
    }

    #[test]
    fn vae_table_counts() {
        let m = Model::Vae(ToyVae::uniform(5, 2).unwrap());
        match m.coding_tables(&[0, 1], 12, true).unwrap() {
            CodingTables::BitsBack(t) => {
                assert_eq!(t.prior.len(), 2);
                assert_eq!(t.likelihood.len(), 2);
                assert_eq!(t.posterior.len(), 5);
            }
            CodingTables::Positional { .. } => unreachable!(),
        }
    }

    #[test]
    fn tables_are_deterministic() {
        let logits: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let m = Model::Context(ContextModel::from_logits(ContextOrder::One, 3, logits).unwrap());
        let batch = [0, 2, 2, 1, 0, 1];
        let a = m.coding_tables(&batch, 10, false).unwrap().to_bytes();
        let b = m.coding_tables(&batch, 10, false).unwrap().to_bytes();
        assert_eq!(a, b);
    }
}
