//! Categorical context models: order 0 (marginal) and order 1 (previous
//! symbol as context).

use std::f64::consts::LN_2;

use super::{softmax, Gradient, ModelError};
use crate::prob::{Pmf, Symbol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContextOrder {
    Zero,
    One,
}

/// Logit table of shape `[rows x alphabet]`.
///
/// Order-1 models carry `alphabet + 1` rows: one per previous symbol and a
/// final start row used for the first symbol of every batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextModel {
    order: ContextOrder,
    alphabet: usize,
    logits: Vec<f64>,
}

impl ContextModel {
    /// All-zero logits, i.e. the uniform model.
    pub fn uniform(order: ContextOrder, alphabet: usize) -> Result<Self, ModelError> {
        if alphabet < 2 {
            return Err(ModelError::BadDimensions("alphabet needs at least 2 symbols"));
        }
        let rows = Self::row_count(order, alphabet);
        Ok(ContextModel {
            order,
            alphabet,
            logits: vec![0.0; rows * alphabet],
        })
    }

    pub fn from_logits(order: ContextOrder, alphabet: usize, logits: Vec<f64>) -> Result<Self, ModelError> {
        let mut model = Self::uniform(order, alphabet)?;
        if logits.len() != model.logits.len() {
            return Err(ModelError::BadDimensions("logit count does not match the shape"));
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        model.logits = logits;
        Ok(model)
    }

    fn row_count(order: ContextOrder, alphabet: usize) -> usize {
        match order {
            ContextOrder::Zero => 1,
            ContextOrder::One => alphabet + 1,
        }
    }

    pub fn order(&self) -> ContextOrder {
        self.order
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn rows(&self) -> usize {
        Self::row_count(self.order, self.alphabet)
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    pub fn row_logits(&self, row: usize) -> &[f64] {
        &self.logits[row * self.alphabet..(row + 1) * self.alphabet]
    }

    /// Row index for a context. Order-0 models ignore the context; order-1
    /// models map `None` to the start row.
    pub fn row_for(&self, ctx: Option<Symbol>) -> usize {
        match (self.order, ctx) {
            (ContextOrder::Zero, _) => 0,
            (ContextOrder::One, Some(prev)) => prev,
            (ContextOrder::One, None) => self.alphabet,
        }
    }

    /// Context of position `i` within `batch`.
    pub fn context_at(&self, batch: &[Symbol], i: usize) -> Option<Symbol> {
        match self.order {
            ContextOrder::Zero => None,
            ContextOrder::One => i.checked_sub(1).map(|j| batch[j]),
        }
    }

    pub fn row_index_at(&self, batch: &[Symbol], i: usize) -> usize {
        self.row_for(self.context_at(batch, i))
    }

    pub fn row_probs(&self, row: usize) -> Vec<f64> {
        softmax(self.row_logits(row))
    }

    pub fn pmf_for_context(&self, ctx: Option<Symbol>) -> Pmf {
        Pmf::new(self.row_probs(self.row_for(ctx))).expect("softmax output is normalized")
    }

    fn check_batch(&self, batch: &[Symbol]) -> Result<(), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if let Some(&s) = batch.iter().find(|&&s| s >= self.alphabet) {
            return Err(ModelError::SymbolOutOfRange(s));
        }
        Ok(())
    }

    /// Mean `-log2 p(symbol | context)` over the batch.
    pub fn nll_bits(&self, batch: &[Symbol]) -> Result<f64, ModelError> {
        self.check_batch(batch)?;
        let mut cache: Vec<Option<Vec<f64>>> = vec![None; self.rows()];
        let mut total = 0.0;
        for (i, &s) in batch.iter().enumerate() {
            let row = self.row_index_at(batch, i);
            let probs = cache[row].get_or_insert_with(|| self.row_probs(row));
            total -= probs[s].log2();
        }
        Ok(total / batch.len() as f64)
    }

    /// Analytic gradient of [`Self::nll_bits`] with respect to the logits.
    pub fn grad_nll(&self, batch: &[Symbol]) -> Result<Gradient, ModelError> {
        self.check_batch(batch)?;
        let a = self.alphabet;
        let rows = self.rows();
        // Visit counts per row and symbol occurrences per (row, symbol).
        let mut visits = vec![0u64; rows];
        let mut hits = vec![0u64; rows * a];
        for (i, &s) in batch.iter().enumerate() {
            let row = self.row_index_at(batch, i);
            visits[row] += 1;
            hits[row * a + s] += 1;
        }
        let scale = 1.0 / (batch.len() as f64 * LN_2);
        let mut grad = vec![0.0; rows * a];
        for row in 0..rows {
            if visits[row] == 0 {
                continue;
            }
            let probs = self.row_probs(row);
            let n = visits[row] as f64;
            for k in 0..a {
                grad[row * a + k] = (n * probs[k] - hits[row * a + k] as f64) * scale;
            }
        }
        Ok(Gradient::new(grad))
    }
}
