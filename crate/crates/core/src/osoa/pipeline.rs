//! End-to-end OSOA encoding and decoding.

use super::bits_back::{bits_back_decode, bits_back_encode};
use super::codec::{encode_or_cache, Codec};
use super::reservoir::Reservoir;
use super::{batch_lengths, BatchStream, Event, OsoaConfig, OsoaError};
use crate::adapt::{apply_dynamics, OptimizerState};
use crate::coders::{AcDecoder, AcEncoder, CoderError, StreamRans, RANS_L};
use crate::container::{Chunk, ChunkMeta, CoderKind, ContainerHeader, OsoaContainer};
use crate::models::{Model, ModelError, TableSource};
use crate::prob::Symbol;

/// Per-batch record kept by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLog {
    /// 1-based batch index.
    pub batch_index: usize,
    pub symbols: usize,
    /// Ideal code length under the quantized tables that coded the batch
    /// (net of returned bits for bits-back coding).
    pub theoretical_bits: f64,
    /// Code length under the unquantized model: NLL for context models,
    /// negative ELBO for the VAE.
    pub model_bits: f64,
    /// Summed `KL(p ‖ p̄)` of the distributions that coded the batch.
    pub quantization_kl_bits: f64,
    /// Optimizer steps taken on this batch after coding it.
    pub adapt_steps: u32,
}

impl BatchLog {
    pub fn theoretical_bpd(&self) -> f64 {
        self.theoretical_bits / self.symbols as f64
    }
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub container: OsoaContainer,
    pub batch_log: Vec<BatchLog>,
    /// Parameter checksum of the model after the last batch.
    pub final_checksum: u64,
}

impl EncodeOutput {
    pub fn theoretical_bits(&self) -> f64 {
        self.batch_log.iter().map(|b| b.theoretical_bits).sum()
    }

    pub fn symbols(&self) -> usize {
        self.batch_log.iter().map(|b| b.symbols).sum()
    }

    /// Running theoretical bits per symbol after each batch.
    pub fn cumulative_bpd(&self) -> Vec<f64> {
        let mut bits = 0.0;
        let mut n = 0usize;
        self.batch_log
            .iter()
            .map(|b| {
                bits += b.theoretical_bits;
                n += b.symbols;
                bits / n as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutput {
    pub data: Vec<Symbol>,
    pub final_checksum: u64,
    pub chunk_checksums: Vec<u64>,
}

pub fn osoa_encode(data: &[Symbol], base: &Model, config: &OsoaConfig) -> Result<EncodeOutput, OsoaError> {
    osoa_encode_observed(data, base, config, &mut |_| {})
}

/// Encodes `data`, reporting each encoder step to `observer`.
pub fn osoa_encode_observed(
    data: &[Symbol],
    base: &Model,
    config: &OsoaConfig,
    observer: &mut dyn FnMut(&Event),
) -> Result<EncodeOutput, OsoaError> {
    config.validate()?;
    check_inputs(data, base, config)?;

    let stream = BatchStream::new(data, config.batch_size);
    let total = stream.len();
    let chunk_batches = match config.coder {
        CoderKind::Ac => total,
        CoderKind::Rans => config.chunk_size,
    };

    let mut model = base.clone();
    let mut state = OptimizerState::new(config.optimizer.kind, model.param_count());
    let mut codec = Codec::new(config);
    let mut batch_log = Vec::with_capacity(total);
    let mut metas = Vec::new();

    for (t, batch) in stream.iter().enumerate() {
        let index = t + 1;
        let last = index == total;
        let tables = model.coding_tables(batch, config.precision_bits, config.bits_back)?;
        let theoretical_bits = tables.ideal_bits(batch);
        let model_bits = model.loss_bits(batch)? * batch.len() as f64;
        let quantization_kl_bits = model.quantization_kl_bits(batch, config.precision_bits, config.bits_back)?;

        encode_or_cache(&mut codec, &model, batch, index, last, observer)?;

        // The decoder never needs the model after the final batch.
        let adapt_steps = if last {
            0
        } else {
            apply_dynamics(&mut model, &mut state, batch, &config.optimizer, &config.schedule, index)?
        };
        if adapt_steps > 0 {
            observer(&Event::Adapt { batch: index });
        }
        batch_log.push(BatchLog {
            batch_index: index,
            symbols: batch.len(),
            theoretical_bits,
            model_bits,
            quantization_kl_bits,
            adapt_steps,
        });

        if index % chunk_batches == 0 || last {
            let first = metas.len() * chunk_batches;
            metas.push(ChunkMeta {
                first_batch: first as u32,
                last_batch: t as u32,
                param_checksum: model.checksum(),
            });
        }
    }

    let payloads = codec.finish()?;
    debug_assert_eq!(payloads.len(), metas.len());
    let chunks = metas
        .into_iter()
        .zip(payloads)
        .map(|(meta, payload)| Chunk { meta, payload })
        .collect();
    Ok(EncodeOutput {
        container: OsoaContainer {
            header: header_for(data.len(), base, config),
            chunks,
        },
        batch_log,
        final_checksum: model.checksum(),
    })
}

fn check_inputs(data: &[Symbol], model: &Model, config: &OsoaConfig) -> Result<(), OsoaError> {
    if data.is_empty() {
        return Err(OsoaError::EmptyData);
    }
    if let Some(&s) = data.iter().find(|&&s| s >= model.alphabet_size()) {
        return Err(ModelError::SymbolOutOfRange(s).into());
    }
    if config.bits_back && !matches!(model, Model::Vae(_)) {
        return Err(OsoaError::Config("bits-back coding requires a latent-variable model".into()));
    }
    Ok(())
}

fn header_for(data_length: usize, base: &Model, config: &OsoaConfig) -> ContainerHeader {
    ContainerHeader {
        coder: config.coder,
        bits_back: config.bits_back,
        precision_bits: config.precision_bits as u8,
        batch_size: config.batch_size as u32,
        chunk_size: config.chunk_size as u32,
        data_length: data_length as u64,
        optimizer: config.optimizer,
        schedule: config.schedule,
        seed: config.seed,
        base_checksum: base.checksum(),
    }
}

/// Decodes a container produced by [`osoa_encode`] starting from `base`.
pub fn osoa_decode(container: &OsoaContainer, base: &Model) -> Result<DecodeOutput, OsoaError> {
    let header = &container.header;
    header.validate()?;
    let actual = base.checksum();
    if actual != header.base_checksum {
        return Err(OsoaError::BaseModelMismatch {
            expected: header.base_checksum,
            actual,
        });
    }
    if header.coder == CoderKind::Ac && container.chunks.len() != 1 {
        return Err(OsoaError::Config("arithmetic-coded containers hold exactly one chunk".into()));
    }

    let mut model = base.clone();
    let mut state = OptimizerState::new(header.optimizer.kind, model.param_count());
    let mut data = Vec::with_capacity(header.data_length as usize);
    let mut chunk_checksums = Vec::with_capacity(container.chunks.len());
    for (k, chunk) in container.chunks.iter().enumerate() {
        data.extend(decode_chunk(header, chunk, k, &mut model, &mut state)?);
        let actual = model.checksum();
        if actual != chunk.meta.param_checksum {
            return Err(OsoaError::ChecksumMismatch {
                chunk: k,
                expected: chunk.meta.param_checksum,
                actual,
            });
        }
        chunk_checksums.push(actual);
    }
    if data.len() as u64 != header.data_length {
        return Err(OsoaError::Truncated {
            chunk: container.chunks.len().saturating_sub(1),
        });
    }
    Ok(DecodeOutput {
        data,
        final_checksum: model.checksum(),
        chunk_checksums,
    })
}

/// Decodes one chunk given the model and optimizer state in force at its
/// first batch, leaving both as they are after its last batch.
pub fn decode_chunk(
    header: &ContainerHeader,
    chunk: &Chunk,
    chunk_index: usize,
    model: &mut Model,
    state: &mut OptimizerState,
) -> Result<Vec<Symbol>, OsoaError> {
    let lens = batch_lengths(header.data_length as usize, header.batch_size as usize);
    let total = lens.len();
    let first = chunk.meta.first_batch as usize;
    let last = chunk.meta.last_batch as usize;
    if last >= total || first > last {
        return Err(OsoaError::Truncated { chunk: chunk_index });
    }
    if header.bits_back && !matches!(model, Model::Vae(_)) {
        return Err(OsoaError::Config("bits-back coding requires a latent-variable model".into()));
    }
    let precision = u32::from(header.precision_bits);
    let truncated = |e: CoderError| match e {
        CoderError::Underflow | CoderError::Truncated | CoderError::Exhausted | CoderError::Corrupt => {
            OsoaError::Truncated { chunk: chunk_index }
        }
        other => OsoaError::Coder(other),
    };

    let mut out = Vec::new();
    let mut ac = match header.coder {
        CoderKind::Ac => Some(AcDecoder::new(&chunk.payload).map_err(truncated)?),
        CoderKind::Rans => None,
    };
    let mut rans = match header.coder {
        CoderKind::Rans => Some(StreamRans::from_bytes(&chunk.payload).map_err(truncated)?),
        CoderKind::Ac => None,
    };

    for (t, &len) in lens.iter().enumerate().take(last + 1).skip(first) {
        let mut batch = Vec::with_capacity(len);
        {
            let mut tables = TableSource::new(model, precision, header.bits_back)?;
            if let Some(vae) = tables.vae_tables() {
                let rans = rans.as_mut().expect("bits-back implies rANS");
                for _ in 0..len {
                    let x = bits_back_decode(rans, vae).map_err(|e| match e {
                        OsoaError::Coder(c) => truncated(c),
                        other => other,
                    })?;
                    batch.push(x);
                }
            } else {
                for i in 0..len {
                    let q = tables.table_at(&batch, i)?;
                    let s = match (&mut ac, &mut rans) {
                        (Some(dec), _) => dec.decode(q),
                        (None, Some(r)) => r.pop(q),
                        (None, None) => unreachable!(),
                    }
                    .map_err(truncated)?;
                    batch.push(s);
                }
            }
        }
        let index = t + 1;
        if index < total {
            apply_dynamics(model, state, &batch, &header.optimizer, &header.schedule, index)?;
        }
        out.extend(batch);
    }

    if let Some(rans) = rans {
        let (x, mut words) = rans.into_parts();
        words.reverse();
        let clean = x == RANS_L
            && (words.is_empty() || (header.bits_back && words == Reservoir::prefix(header.seed, chunk_index as u64, words.len())));
        if !clean {
            return Err(OsoaError::Truncated { chunk: chunk_index });
        }
    }
    Ok(out)
}

/// Codes `data` with a fixed model as a single chunk, with no adaptation.
///
/// Produces the same payload as [`osoa_encode`] with adaptation disabled
/// and every batch in one chunk.
pub fn static_encode(data: &[Symbol], model: &Model, config: &OsoaConfig) -> Result<Vec<u8>, OsoaError> {
    config.validate()?;
    check_inputs(data, model, config)?;
    let stream = BatchStream::new(data, config.batch_size);
    let mut tables = TableSource::new(model, config.precision_bits, config.bits_back)?;
    match config.coder {
        CoderKind::Ac => {
            let mut enc = AcEncoder::new();
            for batch in stream.iter() {
                for (i, &s) in batch.iter().enumerate() {
                    enc.encode(tables.table_at(batch, i)?, s)?;
                }
            }
            Ok(enc.finish())
        }
        CoderKind::Rans => {
            let mut rans = StreamRans::new();
            let mut reservoir = Reservoir::for_chunk(config.seed, 0);
            let batches: Vec<&[Symbol]> = stream.iter().collect();
            for batch in batches.into_iter().rev() {
                if let Some(vae) = tables.vae_tables() {
                    for &x in batch.iter().rev() {
                        bits_back_encode(&mut rans, vae, x, &mut reservoir)?;
                    }
                } else {
                    for i in (0..batch.len()).rev() {
                        rans.push(tables.table_at(batch, i)?, batch[i])?;
                    }
                }
            }
            Ok(rans.to_bytes())
        }
    }
}
