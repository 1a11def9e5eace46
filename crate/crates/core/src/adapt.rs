//! The deterministic dynamical system that maps `(model, batch)` to an
//! updated model: a gradient optimizer plus a per-batch update schedule.
//!
//! Every update is a fixed-order sequential fold in double precision, so
//! identical inputs give bit-identical parameter trajectories.

use thiserror::Error;

use crate::models::{Gradient, Model, ModelError};
use crate::prob::Symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    AdaMax,
}

impl OptimizerKind {
    pub fn id(self) -> u8 {
        match self {
            OptimizerKind::Sgd => 0,
            OptimizerKind::AdaMax => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(OptimizerKind::Sgd),
            1 => Some(OptimizerKind::AdaMax),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("beta values must lie in [0, 1), got ({0}, {1})")]
    Beta(f64, f64),
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("updates per batch must be at least 1")]
    UpdatesPerBatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            ..Self::adamax(learning_rate)
        }
    }

    /// AdaMax with `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn adamax(learning_rate: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::AdaMax,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ConfigError::LearningRate(self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(ConfigError::Beta(self.beta1, self.beta2));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Optimizer state carried across batches. SGD leaves the moment vectors
/// empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: Vec<f64>,
    pub inf_norm: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, param_count: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptimizerState::default(),
            OptimizerKind::AdaMax => OptimizerState {
                step_count: 0,
                first_moment: vec![0.0; param_count],
                inf_norm: vec![0.0; param_count],
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptationSchedule {
    pub updates_per_batch: u32,
    /// Last 1-based batch index that still triggers updates.
    pub early_stop_step: Option<u32>,
}

impl Default for AdaptationSchedule {
    fn default() -> Self {
        AdaptationSchedule {
            updates_per_batch: 1,
            early_stop_step: None,
        }
    }
}

impl AdaptationSchedule {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.updates_per_batch == 0 {
            return Err(ConfigError::UpdatesPerBatch);
        }
        Ok(())
    }

    pub fn is_active(&self, batch_index: usize) -> bool {
        self.early_stop_step.is_none_or(|s| batch_index <= s as usize)
    }
}

/// `θ ← θ − lr·g`
pub fn sgd_step(params: &mut [f64], grad: &Gradient, learning_rate: f64) {
    assert_eq!(params.len(), grad.len(), "gradient shape mismatch");
    for (p, g) in params.iter_mut().zip(grad.values()) {
        *p -= learning_rate * g;
    }
}

/// One AdaMax step:
/// `m ← β1·m + (1−β1)·g`, `u ← max(β2·u, |g|)`,
/// `θ ← θ − (lr / (1 − β1^t))·m / (u + ε)`.
pub fn adamax_step(params: &mut [f64], grad: &Gradient, config: &OptimizerConfig, state: &mut OptimizerState) {
    assert_eq!(params.len(), grad.len(), "gradient shape mismatch");
    if state.first_moment.len() != params.len() {
        *state = OptimizerState::new(OptimizerKind::AdaMax, params.len());
    }
    state.step_count += 1;
    let step = config.learning_rate / (1.0 - config.beta1.powf(state.step_count as f64));
    for (i, (p, &g)) in params.iter_mut().zip(grad.values()).enumerate() {
        let m = config.beta1 * state.first_moment[i] + (1.0 - config.beta1) * g;
        let u = (config.beta2 * state.inf_norm[i]).max(g.abs());
        state.first_moment[i] = m;
        state.inf_norm[i] = u;
        *p -= step * m / (u + config.epsilon);
    }
}

/// One optimizer step on `batch`.
pub fn optimizer_step(
    model: &mut Model,
    state: &mut OptimizerState,
    batch: &[Symbol],
    config: &OptimizerConfig,
) -> Result<(), ModelError> {
    let grad = model.gradient(batch)?;
    match config.kind {
        OptimizerKind::Sgd => {
            state.step_count += 1;
            sgd_step(model.params_mut(), &grad, config.learning_rate);
        }
        OptimizerKind::AdaMax => adamax_step(model.params_mut(), &grad, config, state),
    }
    Ok(())
}

/// Adapts `model` on batch number `batch_index` (1-based).
///
/// Returns the number of optimizer steps taken: `updates_per_batch`, or
/// zero once the batch index is past `early_stop_step`.
pub fn apply_dynamics(
    model: &mut Model,
    state: &mut OptimizerState,
    batch: &[Symbol],
    config: &OptimizerConfig,
    schedule: &AdaptationSchedule,
    batch_index: usize,
) -> Result<u32, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    if !schedule.is_active(batch_index) {
        return Ok(0);
    }
    for _ in 0..schedule.updates_per_batch {
        optimizer_step(model, state, batch, config)?;
    }
    Ok(schedule.updates_per_batch)
}

/// Full passes over `corpus` in consecutive minibatches. Returns the loss
/// (bits per symbol) over the whole corpus after training.
pub fn train_epochs(
    model: &mut Model,
    state: &mut OptimizerState,
    corpus: &[Symbol],
    batch_size: usize,
    epochs: usize,
    config: &OptimizerConfig,
) -> Result<f64, ModelError> {
    if corpus.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for _ in 0..epochs {
        for batch in corpus.chunks(batch_size.max(1)) {
            optimizer_step(model, state, batch, config)?;
        }
    }
    model.loss_bits(corpus)
}
