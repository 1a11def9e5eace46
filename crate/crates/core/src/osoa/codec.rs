//! The encoder-side codec: immediate coding for FIFO coders, cache and
//! reverse flush for FILO coders.

use std::thread::JoinHandle;

use super::bits_back::bits_back_encode;
use super::reservoir::Reservoir;
use super::{Event, OsoaConfig, OsoaError};
use crate::coders::{AcEncoder, StreamRans};
use crate::container::CoderKind;
use crate::models::{Model, TableSource};
use crate::prob::Symbol;

/// One cached batch: the model that must code it and the batch itself.
#[derive(Debug, Clone)]
pub struct CacheEntry {
    pub batch_index: usize,
    pub model: Model,
    pub batch: Vec<Symbol>,
}

/// Bounded cache of `(model snapshot, batch)` pairs awaiting a FILO flush.
#[derive(Debug, Clone)]
pub struct FiloCache {
    entries: Vec<CacheEntry>,
    capacity: usize,
}

impl FiloCache {
    pub fn new(capacity: usize) -> Self {
        FiloCache {
            entries: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, entry: CacheEntry) -> Result<(), OsoaError> {
        if self.entries.len() >= self.capacity {
            return Err(OsoaError::CacheOverflow);
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn take(&mut self) -> Vec<CacheEntry> {
        std::mem::take(&mut self.entries)
    }
}

/// Chunk coding parameters that travel with a flush job.
#[derive(Debug, Clone, Copy)]
struct ChunkParams {
    precision_bits: u32,
    bits_back: bool,
    seed: u64,
}

enum PendingChunk {
    Done(Vec<u8>),
    Running(JoinHandle<Result<Vec<u8>, OsoaError>>),
}

/// Encoder state: a live arithmetic coder (FIFO) or a cache plus the
/// chunks already sealed (FILO).
pub struct Codec {
    inner: Inner,
}

enum Inner {
    Fifo {
        encoder: AcEncoder,
        precision_bits: u32,
    },
    Filo {
        cache: FiloCache,
        chunks: Vec<PendingChunk>,
        params: ChunkParams,
        background: bool,
    },
}

impl Codec {
    pub fn new(config: &OsoaConfig) -> Self {
        let inner = match config.coder {
            CoderKind::Ac => Inner::Fifo {
                encoder: AcEncoder::new(),
                precision_bits: config.precision_bits,
            },
            CoderKind::Rans => Inner::Filo {
                cache: FiloCache::new(config.chunk_size),
                chunks: Vec::new(),
                params: ChunkParams {
                    precision_bits: config.precision_bits,
                    bits_back: config.bits_back,
                    seed: config.seed,
                },
                background: config.background_flush,
            },
        };
        Codec { inner }
    }

    pub fn cache_len(&self) -> usize {
        match &self.inner {
            Inner::Fifo { .. } => 0,
            Inner::Filo { cache, .. } => cache.len(),
        }
    }

    /// Sealed chunk payloads, in chunk order.
    pub fn finish(self) -> Result<Vec<Vec<u8>>, OsoaError> {
        match self.inner {
            Inner::Fifo { encoder, .. } => Ok(vec![encoder.finish()]),
            Inner::Filo { cache, chunks, .. } => {
                if !cache.is_empty() {
                    return Err(OsoaError::Config("FILO cache still holds unflushed batches".into()));
                }
                chunks
                    .into_iter()
                    .map(|c| match c {
                        PendingChunk::Done(bytes) => Ok(bytes),
                        PendingChunk::Running(handle) => handle.join().expect("flush worker panicked"),
                    })
                    .collect()
            }
        }
    }
}

/// Codes `batch` immediately (FIFO) or caches it with a snapshot of
/// `model`, flushing the cache in reverse once it holds `m` batches or the
/// batch is the last one (FILO).
pub fn encode_or_cache(
    codec: &mut Codec,
    model: &Model,
    batch: &[Symbol],
    batch_index: usize,
    last_batch: bool,
    observer: &mut dyn FnMut(&Event),
) -> Result<(), OsoaError> {
    match &mut codec.inner {
        Inner::Fifo { encoder, precision_bits } => {
            let mut tables = TableSource::new(model, *precision_bits, false)?;
            for (i, &s) in batch.iter().enumerate() {
                encoder.encode(tables.table_at(batch, i)?, s)?;
            }
            observer(&Event::Encode { batch: batch_index });
        }
        Inner::Filo {
            cache,
            chunks,
            params,
            background,
        } => {
            cache.push(CacheEntry {
                batch_index,
                model: model.clone(),
                batch: batch.to_vec(),
            })?;
            observer(&Event::Cache { batch: batch_index });
            if cache.is_full() || last_batch {
                let entries = cache.take();
                let chunk_index = chunks.len();
                let order: Vec<usize> = entries.iter().rev().map(|e| e.batch_index).collect();
                observer(&Event::Flush {
                    chunk: chunk_index,
                    order: order.clone(),
                });
                for &b in &order {
                    observer(&Event::Encode { batch: b });
                }
                let params = *params;
                let pending = if *background {
                    PendingChunk::Running(std::thread::spawn(move || encode_chunk(&entries, chunk_index, params)))
                } else {
                    PendingChunk::Done(encode_chunk(&entries, chunk_index, params)?)
                };
                chunks.push(pending);
            }
        }
    }
    Ok(())
}

fn encode_chunk(entries: &[CacheEntry], chunk_index: usize, params: ChunkParams) -> Result<Vec<u8>, OsoaError> {
    let mut rans = StreamRans::new();
    let mut reservoir = Reservoir::for_chunk(params.seed, chunk_index as u64);
    for entry in entries.iter().rev() {
        let mut tables = TableSource::new(&entry.model, params.precision_bits, params.bits_back)?;
        let batch = &entry.batch;
        if params.bits_back {
            let vae = tables
                .vae_tables()
                .ok_or_else(|| OsoaError::Config("bits-back coding requires a latent-variable model".into()))?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ContextModel, ContextOrder};

    fn model() -> Model {
        Model::Context(ContextModel::uniform(ContextOrder::Zero, 4).unwrap())
    }

    #[test]
    fn fifo_never_caches() {
        let config = OsoaConfig {
            coder: CoderKind::Ac,
            ..OsoaConfig::default()
        };
        let mut codec = Codec::new(&config);
        for t in 1..=4 {
            encode_or_cache(&mut codec, &model(), &[0, 1, 2], t, t == 4, &mut |_| {}).unwrap();
            assert_eq!(codec.cache_len(), 0);
        }
        assert_eq!(codec.finish().unwrap().len(), 1);
    }

    #[test]
    fn filo_flushes_every_m_batches() {
        let config = OsoaConfig {
            chunk_size: 3,
            ..OsoaConfig::default()
        };
        let mut codec = Codec::new(&config);
        let mut flushes = Vec::new();
        for t in 1..=6 {
            encode_or_cache(&mut codec, &model(), &[3, 1], t, t == 6, &mut |e| {
                if let Event::Flush { order, .. } = e {
                    flushes.push(order.clone());
                }
            })
            .unwrap();
            assert_eq!(codec.cache_len(), t % 3);
        }
        assert_eq!(flushes, [vec![3, 2, 1], vec![6, 5, 4]]);
        assert_eq!(codec.finish().unwrap().len(), 2);
    }

    #[test]
    fn cache_rejects_overflow() {
        let mut cache = FiloCache::new(1);
        let entry = CacheEntry {
            batch_index: 1,
            model: model(),
            batch: vec![0],
        };
        cache.push(entry.clone()).unwrap();
        assert!(matches!(cache.push(entry), Err(OsoaError::CacheOverflow)));
    }
}
