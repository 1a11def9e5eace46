//! One-shot online adaptation: code each batch with the current model, then
//! adapt the model on that batch. The decoder replays the same sequence of
//! models from the batches it recovers.
//!
//! FIFO coders (arithmetic coding) code batches as they arrive. FILO coders
//! (rANS) cache `m` batches together with model snapshots and code each
//! chunk in reverse, so batches decode in forward order.

pub mod bits_back;
pub mod codec;
pub mod pipeline;
pub mod reservoir;

use thiserror::Error;

pub use bits_back::{bits_back_decode, bits_back_encode};
pub use codec::{encode_or_cache, Codec, FiloCache};
pub use pipeline::{
    decode_chunk, osoa_decode, osoa_encode, osoa_encode_observed, static_encode, BatchLog, DecodeOutput,
    EncodeOutput,
};
pub use reservoir::Reservoir;

use crate::adapt::{AdaptationSchedule, ConfigError, OptimizerConfig};
use crate::coders::CoderError;
use crate::container::{CoderKind, ContainerError};
use crate::models::ModelError;
use crate::prob::Symbol;

#[derive(Debug, Error)]
pub enum OsoaError {
    #[error("input data is empty")]
    EmptyData,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("base model does not match the container (expected checksum {expected:#018x}, got {actual:#018x})")]
    BaseModelMismatch { expected: u64, actual: u64 },
    #[error("chunk {chunk}: parameter checksum mismatch (expected {expected:#018x}, decoder has {actual:#018x}); adaptation diverged from the encoder")]
    ChecksumMismatch { chunk: usize, expected: u64, actual: u64 },
    #[error("chunk {chunk}: payload is truncated or corrupt")]
    Truncated { chunk: usize },
    #[error("initial-bits reservoir exhausted")]
    ReservoirExhausted,
    #[error("FILO cache overflow")]
    CacheOverflow,
    #[error(transparent)]
    Coder(#[from] CoderError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

impl From<ConfigError> for OsoaError {
    fn from(e: ConfigError) -> Self {
        OsoaError::Config(e.to_string())
    }
}

/// Everything needed to reproduce the codec and the dynamical system.
#[derive(Debug, Clone, PartialEq)]
pub struct OsoaConfig {
    pub coder: CoderKind,
    pub bits_back: bool,
    pub precision_bits: u32,
    pub batch_size: usize,
    /// Batches per FILO chunk (`m`). Ignored by FIFO coders.
    pub chunk_size: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: AdaptationSchedule,
    /// Seeds the bits-back initial-bits reservoir.
    pub seed: u64,
    /// Flush sealed FILO chunks on worker threads. Output is identical to
    /// synchronous flushing.
    pub background_flush: bool,
}

impl Default for OsoaConfig {
    fn default() -> Self {
        OsoaConfig {
            coder: CoderKind::Rans,
            bits_back: false,
            precision_bits: 16,
            batch_size: 256,
            chunk_size: 8,
            optimizer: OptimizerConfig::adamax(0.01),
            schedule: AdaptationSchedule::default(),
            seed: 0,
            background_flush: false,
        }
    }
}

impl OsoaConfig {
    pub fn validate(&self) -> Result<(), OsoaError> {
        if !(2..=16).contains(&self.precision_bits) {
            return Err(OsoaError::Config(format!("precision_bits {} outside 2..=16", self.precision_bits)));
        }
        if self.batch_size == 0 || self.batch_size > u32::MAX as usize {
            return Err(OsoaError::Config("batch_size must be positive".into()));
        }
        if self.chunk_size == 0 || self.chunk_size > u32::MAX as usize {
            return Err(OsoaError::Config("chunk_size must be positive".into()));
        }
        if self.bits_back && self.coder != CoderKind::Rans {
            return Err(OsoaError::Config("bits-back coding requires the rANS coder".into()));
        }
        self.optimizer.validate()?;
        self.schedule.validate()?;
        Ok(())
    }
}

/// Consecutive batches of `batch_size` symbols; the last may be short.
#[derive(Debug, Clone, Copy)]
pub struct BatchStream<'a> {
    data: &'a [Symbol],
    batch_size: usize,
}

impl<'a> BatchStream<'a> {
    pub fn new(data: &'a [Symbol], batch_size: usize) -> Self {
        assert!(batch_size > 0);
        BatchStream { data, batch_size }
    }

    pub fn len(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self, t: usize) -> &'a [Symbol] {
        let start = t * self.batch_size;
        &self.data[start..(start + self.batch_size).min(self.data.len())]
    }

    pub fn iter(&self) -> std::slice::Chunks<'a, Symbol> {
        self.data.chunks(self.batch_size)
    }
}

/// Lengths of the batches that partition `data_length` symbols.
pub fn batch_lengths(data_length: usize, batch_size: usize) -> Vec<usize> {
    let full = data_length / batch_size;
    let mut lens = vec![batch_size; full];
    if !data_length.is_multiple_of(batch_size) {
        lens.push(data_length % batch_size);
    }
    lens
}

/// Steps of the encoder, reported to an observer. Batch indices are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A batch was entropy coded.
    Encode { batch: usize },
    /// A batch and model snapshot entered the FILO cache.
    Cache { batch: usize },
    /// A FILO chunk was sealed; `order` lists its batches in coding order.
    Flush { chunk: usize, order: Vec<usize> },
    /// The model was adapted on a batch.
    Adapt { batch: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_stream_partitions_data() {
        let data: Vec<usize> = (0..10).collect();
        let s = BatchStream::new(&data, 4);
        assert_eq!(s.len(), 3);
        assert_eq!(s.batch(2), &[8, 9]);
        assert_eq!(s.iter().flatten().copied().collect::<Vec<_>>(), data);
        assert_eq!(batch_lengths(10, 4), [4, 4, 2]);
        assert_eq!(batch_lengths(8, 4), [4, 4]);
    }

    #[test]
    fn bits_back_needs_rans() {
        let config = OsoaConfig {
            coder: CoderKind::Ac,
            bits_back: true,
            ..OsoaConfig::default()
        };
        assert!(matches!(config.validate(), Err(OsoaError::Config(_))));
        assert!(OsoaConfig::default().validate().is_ok());
    }
}
