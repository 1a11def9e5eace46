//! A toy latent-variable model with one discrete latent: prior `p(z)`,
//! likelihood `p(x|z)` and approximate posterior `q(z|x)`, all categorical.
//!
//! The latent is small enough that the ELBO and its gradient are computed
//! by exact summation over `z`, which keeps adaptation deterministic.

use std::f64::consts::LN_2;

use super::{softmax, Gradient, ModelError};
use crate::prob::{Pmf, Symbol};

/// Parameters laid out flat as `[prior (Z) | likelihood (Z x A) | posterior (A x Z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyVae {
    alphabet: usize,
    latent: usize,
    params: Vec<f64>,
}

impl ToyVae {
    pub fn uniform(alphabet: usize, latent: usize) -> Result<Self, ModelError> {
        if alphabet < 2 {
            return Err(ModelError::BadDimensions("alphabet needs at least 2 symbols"));
        }
        if latent == 0 {
            return Err(ModelError::BadDimensions("latent needs at least one value"));
        }
        Ok(ToyVae {
            alphabet,
            latent,
            params: vec![0.0; latent + 2 * latent * alphabet],
        })
    }

    pub fn from_params(alphabet: usize, latent: usize, params: Vec<f64>) -> Result<Self, ModelError> {
        let mut vae = Self::uniform(alphabet, latent)?;
        if params.len() != vae.params.len() {
            return Err(ModelError::BadDimensions("parameter count does not match the shape"));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        vae.params = params;
        Ok(vae)
    }

    /// Builds a model from explicit probability tables (log-probabilities
    /// become logits). Zero probabilities are rejected.
    pub fn from_tables(prior: &[f64], likelihood: &[Vec<f64>], posterior: &[Vec<f64>]) -> Result<Self, ModelError> {
        let latent = prior.len();
        let alphabet = likelihood.first().map_or(0, Vec::len);
        if likelihood.len() != latent || posterior.len() != alphabet {
            return Err(ModelError::BadDimensions("table shapes disagree"));
        }
        let mut params = Vec::with_capacity(latent + 2 * latent * alphabet);
        params.extend(prior.iter().map(|p| p.ln()));
        for row in likelihood {
            params.extend(row.iter().map(|p| p.ln()));
        }
        for row in posterior {
            if row.len() != latent {
                return Err(ModelError::BadDimensions("posterior row length"));
            }
            params.extend(row.iter().map(|p| p.ln()));
        }
        Self::from_params(alphabet, latent, params)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn latent_size(&self) -> usize {
        self.latent
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn likelihood_offset(&self, z: usize) -> usize {
        self.latent + z * self.alphabet
    }

    fn posterior_offset(&self, x: Symbol) -> usize {
        self.latent + self.latent * self.alphabet + x * self.latent
    }

    pub fn prior_probs(&self) -> Vec<f64> {
        softmax(&self.params[..self.latent])
    }

    pub fn likelihood_probs(&self, z: usize) -> Vec<f64> {
        let o = self.likelihood_offset(z);
        softmax(&self.params[o..o + self.alphabet])
    }

    pub fn posterior_probs(&self, x: Symbol) -> Vec<f64> {
        let o = self.posterior_offset(x);
        softmax(&self.params[o..o + self.latent])
    }

    pub fn prior_pmf(&self) -> Pmf {
        Pmf::new(self.prior_probs()).expect("softmax output is normalized")
    }

    pub fn likelihood_pmf(&self, z: usize) -> Pmf {
        Pmf::new(self.likelihood_probs(z)).expect("softmax output is normalized")
    }

    pub fn posterior_pmf(&self, x: Symbol) -> Pmf {
        Pmf::new(self.posterior_probs(x)).expect("softmax output is normalized")
    }

    fn likelihood_table(&self) -> Vec<Vec<f64>> {
        (0..self.latent).map(|z| self.likelihood_probs(z)).collect()
    }

    /// `sum_z p(z) p(x|z)`.
    pub fn exact_marginal(&self, x: Symbol) -> f64 {
        let prior = self.prior_probs();
        (0..self.latent)
            .map(|z| prior[z] * self.likelihood_probs(z)[x])
            .sum()
    }

    /// Marginal distribution of `x` with the latent summed out.
    pub fn marginal_pmf(&self) -> Pmf {
        let prior = self.prior_probs();
        let lik = self.likelihood_table();
        let mut probs = vec![0.0; self.alphabet];
        for (pz, row) in prior.iter().zip(&lik) {
            for (acc, px) in probs.iter_mut().zip(row) {
                *acc += pz * px;
            }
        }
        let sum: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= sum);
        Pmf::new(probs).expect("marginal of normalized tables is normalized")
    }

    /// Exact posterior `p(z|x)` under the generative half of the model.
    pub fn exact_posterior(&self, x: Symbol) -> Vec<f64> {
        let prior = self.prior_probs();
        let joint: Vec<f64> = (0..self.latent)
            .map(|z| prior[z] * self.likelihood_probs(z)[x])
            .collect();
        let total: f64 = joint.iter().sum();
        joint.into_iter().map(|j| j / total).collect()
    }

    /// Replaces `q(z|x)` by the exact posterior for every `x`.
    pub fn set_exact_posterior(&mut self) {
        for x in 0..self.alphabet {
            let post = self.exact_posterior(x);
            let o = self.posterior_offset(x);
            for (z, p) in post.into_iter().enumerate() {
                self.params[o + z] = p.max(f64::MIN_POSITIVE).ln();
            }
        }
    }

    fn elbo_terms(&self, x: Symbol, prior: &[f64], lik: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let q = self.posterior_probs(x);
        // f_z = ln q(z|x) - ln p(x|z) - ln p(z), in nats.
        let f = (0..self.latent)
            .map(|z| q[z].ln() - lik[z][x].ln() - prior[z].ln())
            .collect();
        (q, f)
    }

    /// Negative ELBO of `x` in bits: `E_q[log q(z|x) - log p(x|z) p(z)] / ln 2`.
    pub fn elbo_bits(&self, x: Symbol) -> f64 {
        let prior = self.prior_probs();
        let lik = self.likelihood_table();
        let (q, f) = self.elbo_terms(x, &prior, &lik);
        expectation(&q, &f) / LN_2
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

    pub fn mean_elbo_bits(&self, batch: &[Symbol]) -> Result<f64, ModelError> {
        self.check_batch(batch)?;
        let prior = self.prior_probs();
        let lik = self.likelihood_table();
        let mut total = 0.0;
        for &x in batch {
            let (q, f) = self.elbo_terms(x, &prior, &lik);
            total += expectation(&q, &f);
        }
        Ok(total / (batch.len() as f64 * LN_2))
    }

    /// Exact gradient of [`Self::mean_elbo_bits`] with respect to all three
    /// logit tables.
    pub fn grad_elbo(&self, batch: &[Symbol]) -> Result<Gradient, ModelError> {
        self.check_batch(batch)?;
        let (a, zs) = (self.alphabet, self.latent);
        let prior = self.prior_probs();
        let lik = self.likelihood_table();
        let mut grad = vec![0.0; self.params.len()];
        for &x in batch {
            let (q, f) = self.elbo_terms(x, &prior, &lik);
            let elbo = expectation(&q, &f);
            for z in 0..zs {
                // d/d(prior logit z) of E_q[-ln p(z)] is p_z - q_z.
                grad[z] += prior[z] - q[z];
                let lo = self.likelihood_offset(z);
                for k in 0..a {
                    let onehot = if k == x { 1.0 } else { 0.0 };
                    grad[lo + k] += q[z] * (lik[z][k] - onehot);
                }
                let po = self.posterior_offset(x);
                if q[z] > 0.0 {
                    grad[po + z] += q[z] * (f[z] - elbo);
                }
            }
        }
        let scale = 1.0 / (batch.len() as f64 * LN_2);
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(Gradient::new(grad))
    }
}

// Terms with q_z = 0 contribute nothing even when f_z is infinite.
fn expectation(q: &[f64], f: &[f64]) -> f64 {
    q.iter()
        .zip(f)
        .filter(|(qz, _)| **qz > 0.0)
        .map(|(qz, fz)| qz * fz)
        .sum()
}
