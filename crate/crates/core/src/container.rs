//! The compressed container: header, chunk table and chunk payloads.
//!
//! All integers are little-endian.
//!
//! ```text
//! header (81 bytes)
//!   magic "OSC1" | version u8 | coder u8 | bits_back u8 | precision u8
//!   batch_size u32 | chunk_size u32 | data_length u64
//!   optimizer u8 | lr f64 | beta1 f64 | beta2 f64 | epsilon f64
//!   updates_per_batch u32 | early_stop u32 (0 = none, else step + 1)
//!   seed u64 | base_model_checksum u64
//! chunk table
//!   chunk_count u32
//!   per chunk: offset u64 | length u64 | first_batch u32 | last_batch u32
//!              | param_checksum u64 | payload_crc32 u32
//! header_crc32 u32 (over the header and chunk table)
//! payloads, concatenated; offsets are relative to the first payload byte
//! ```
//!
//! Batch indices in the chunk table are 0-based and inclusive.

use thiserror::Error;

use crate::adapt::{AdaptationSchedule, OptimizerConfig, OptimizerKind};
use crate::checksum::crc32;

pub const CONTAINER_MAGIC: &[u8; 4] = b"OSC1";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 81;
const CHUNK_ENTRY_LEN: usize = 36;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContainerError {
    #[error("not an OSOA container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u8),
    #[error("invalid header field: {0}")]
    InvalidField(&'static str),
    #[error("container is truncated")]
    Truncated,
    #[error("header checksum mismatch")]
    HeaderChecksum,
    #[error("chunk {index}: payload checksum mismatch")]
    ChunkChecksum { index: usize },
}

impl ContainerError {
    pub fn is_checksum(&self) -> bool {
        matches!(self, ContainerError::HeaderChecksum | ContainerError::ChunkChecksum { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoderKind {
    /// Arithmetic coding, first-in-first-out.
    Ac,
    /// Streaming rANS, first-in-last-out.
    Rans,
}

impl CoderKind {
    pub fn id(self) -> u8 {
        match self {
            CoderKind::Ac => 0,
            CoderKind::Rans => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(CoderKind::Ac),
            1 => Some(CoderKind::Rans),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContainerHeader {
    pub coder: CoderKind,
    pub bits_back: bool,
    pub precision_bits: u8,
    pub batch_size: u32,
    pub chunk_size: u32,
    pub data_length: u64,
    pub optimizer: OptimizerConfig,
    pub schedule: AdaptationSchedule,
    pub seed: u64,
    pub base_checksum: u64,
}

impl ContainerHeader {
    pub fn batch_count(&self) -> usize {
        (self.data_length as usize).div_ceil(self.batch_size as usize)
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(CONTAINER_MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.coder.id());
        out.push(u8::from(self.bits_back));
        out.push(self.precision_bits);
        out.extend_from_slice(&self.batch_size.to_le_bytes());
        out.extend_from_slice(&self.chunk_size.to_le_bytes());
        out.extend_from_slice(&self.data_length.to_le_bytes());
        out.push(self.optimizer.kind.id());
        for v in [
            self.optimizer.learning_rate,
            self.optimizer.beta1,
            self.optimizer.beta2,
            self.optimizer.epsilon,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.schedule.updates_per_batch.to_le_bytes());
        let early = self.schedule.early_stop_step.map_or(0, |s| s + 1);
        out.extend_from_slice(&early.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.base_checksum.to_le_bytes());
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, ContainerError> {
        if r.take(4)? != CONTAINER_MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(ContainerError::UnsupportedVersion(version));
        }
        let coder = CoderKind::from_id(r.u8()?).ok_or(ContainerError::InvalidField("coder"))?;
        let bits_back = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(ContainerError::InvalidField("bits_back")),
        };
        let precision_bits = r.u8()?;
        let batch_size = r.u32()?;
        let chunk_size = r.u32()?;
        let data_length = r.u64()?;
        let kind = OptimizerKind::from_id(r.u8()?).ok_or(ContainerError::InvalidField("optimizer"))?;
        let optimizer = OptimizerConfig {
            kind,
            learning_rate: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            epsilon: r.f64()?,
        };
        let updates_per_batch = r.u32()?;
        let early = r.u32()?;
        let schedule = AdaptationSchedule {
            updates_per_batch,
            early_stop_step: early.checked_sub(1),
        };
        let header = ContainerHeader {
            coder,
            bits_back,
            precision_bits,
            batch_size,
            chunk_size,
            data_length,
            optimizer,
            schedule,
            seed: r.u64()?,
            base_checksum: r.u64()?,
        };
        Ok(header)
    }

    pub fn validate(&self) -> Result<(), ContainerError> {
        if !(2..=16).contains(&self.precision_bits) {
            return Err(ContainerError::InvalidField("precision_bits"));
        }
        if self.batch_size == 0 {
            return Err(ContainerError::InvalidField("batch_size"));
        }
        if self.chunk_size == 0 {
            return Err(ContainerError::InvalidField("chunk_size"));
        }
        if self.data_length == 0 {
            return Err(ContainerError::InvalidField("data_length"));
        }
        if self.bits_back && self.coder != CoderKind::Rans {
            return Err(ContainerError::InvalidField("bits_back requires rANS"));
        }
        if self.optimizer.validate().is_err() {
            return Err(ContainerError::InvalidField("optimizer"));
        }
        if self.schedule.validate().is_err() {
            return Err(ContainerError::InvalidField("updates_per_batch"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkMeta {
    pub first_batch: u32,
    pub last_batch: u32,
    /// Checksum of the model parameters once the chunk's last batch has
    /// been processed.
    pub param_checksum: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub meta: ChunkMeta,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsoaContainer {
    pub header: ContainerHeader,
    pub chunks: Vec<Chunk>,
}

impl OsoaContainer {
    pub fn payload_len(&self) -> usize {
        self.chunks.iter().map(|c| c.payload.len()).sum()
    }

    /// Size of the serialized container in bytes.
    pub fn total_len(&self) -> usize {
        HEADER_LEN + 4 + CHUNK_ENTRY_LEN * self.chunks.len() + 4 + self.payload_len()
    }

    fn validate_table(&self) -> Result<(), ContainerError> {
        let batches = self.header.batch_count() as u64;
        let mut next = 0u64;
        for c in &self.chunks {
            if u64::from(c.meta.first_batch) != next || c.meta.last_batch < c.meta.first_batch {
                return Err(ContainerError::InvalidField("chunk batch ranges"));
            }
            next = u64::from(c.meta.last_batch) + 1;
        }
        if next != batches {
            return Err(ContainerError::InvalidField("chunk batch ranges"));
        }
        Ok(())
    }
}

pub fn write_container(container: &OsoaContainer) -> Vec<u8> {
    let mut out = Vec::with_capacity(container.total_len());
    container.header.encode(&mut out);
    out.extend_from_slice(&(container.chunks.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for c in &container.chunks {
        out.extend_from_slice(&offset.to_le_bytes());
        out.extend_from_slice(&(c.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&c.meta.first_batch.to_le_bytes());
        out.extend_from_slice(&c.meta.last_batch.to_le_bytes());
        out.extend_from_slice(&c.meta.param_checksum.to_le_bytes());
        out.extend_from_slice(&crc32(&c.payload).to_le_bytes());
        offset += c.payload.len() as u64;
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    for c in &container.chunks {
        out.extend_from_slice(&c.payload);
    }
    out
}

pub fn read_container(bytes: &[u8]) -> Result<OsoaContainer, ContainerError> {
    let mut r = Reader::new(bytes);
    let header = ContainerHeader::decode(&mut r)?;
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let offset = r.u64()?;
        let length = r.u64()?;
        let meta = ChunkMeta {
            first_batch: r.u32()?,
            last_batch: r.u32()?,
            param_checksum: r.u64()?,
        };
        let crc = r.u32()?;
        entries.push((offset, length, meta, crc));
    }
    let table_end = r.pos;
    let stored = r.u32()?;
    if crc32(&bytes[..table_end]) != stored {
        return Err(ContainerError::HeaderChecksum);
    }
    header.validate()?;
    let payload_region = &bytes[r.pos..];
    let mut chunks = Vec::with_capacity(entries.len());
    let mut expected_offset = 0u64;
    for (index, (offset, length, meta, crc)) in entries.into_iter().enumerate() {
        if offset != expected_offset {
            return Err(ContainerError::InvalidField("chunk offsets"));
        }
        let end = offset.checked_add(length).ok_or(ContainerError::Truncated)?;
        if end > payload_region.len() as u64 {
            return Err(ContainerError::Truncated);
        }
        let payload = payload_region[offset as usize..end as usize].to_vec();
        if crc32(&payload) != crc {
            return Err(ContainerError::ChunkChecksum { index });
        }
        chunks.push(Chunk { meta, payload });
        expected_offset = end;
    }
    if expected_offset != payload_region.len() as u64 {
        return Err(ContainerError::InvalidField("trailing bytes after payloads"));
    }
    let container = OsoaContainer { header, chunks };
    container.validate_table()?;
    Ok(container)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        let end = self.pos.checked_add(n).ok_or(ContainerError::Truncated)?;
        let slice = self.bytes.get(self.pos..end).ok_or(ContainerError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> OsoaContainer {
        OsoaContainer {
            header: ContainerHeader {
                coder: CoderKind::Rans,
                bits_back: false,
                precision_bits: 14,
                batch_size: 10,
                chunk_size: 2,
                data_length: 35,
                optimizer: OptimizerConfig::adamax(0.01),
                schedule: AdaptationSchedule {
                    updates_per_batch: 3,
                    early_stop_step: None,
                },
                seed: 0xDEAD_BEEF,
                base_checksum: 42,
            },
            chunks: vec![
                Chunk {
                    meta: ChunkMeta {
                        first_batch: 0,
                        last_batch: 1,
                        param_checksum: 7,
                    },
                    payload: vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
                },
                Chunk {
                    meta: ChunkMeta {
                        first_batch: 2,
                        last_batch: 3,
                        param_checksum: 8,
                    },
                    payload: vec![0xAA; 8],
                },
            ],
        }
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = write_container(&c);
        assert_eq!(bytes.len(), c.total_len());
        let back = read_container(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(write_container(&back), bytes);
    }

    #[test]
    fn early_stop_sentinel() {
        let mut c = sample();
        let bytes = write_container(&c);
        // updates_per_batch (4 bytes) precede the early-stop field
        let early_at = HEADER_LEN - 8 - 8 - 4;
        assert_eq!(&bytes[early_at..early_at + 4], &[0, 0, 0, 0]);
        assert_eq!(read_container(&bytes).unwrap().header.schedule.early_stop_step, None);
        c.header.schedule.early_stop_step = Some(0);
        let bytes = write_container(&c);
        assert_eq!(&bytes[early_at..early_at + 4], &[1, 0, 0, 0]);
        assert_eq!(read_container(&bytes).unwrap().header.schedule.early_stop_step, Some(0));
    }

    #[test]
    fn payload_corruption_names_the_chunk() {
        let bytes = write_container(&sample());
        let mut bad = bytes.clone();
        let last = bad.len() - 1;
        bad[last] ^= 0x01;
        assert_eq!(read_container(&bad), Err(ContainerError::ChunkChecksum { index: 1 }));
        let mut bad = bytes.clone();
        let first_payload = bad.len() - 20;
        bad[first_payload] ^= 0x80;
        assert_eq!(read_container(&bad), Err(ContainerError::ChunkChecksum { index: 0 }));
    }

    #[test]
    fn distinct_errors() {
        let bytes = write_container(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(read_container(&bad), Err(ContainerError::BadMagic));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(read_container(&bad), Err(ContainerError::UnsupportedVersion(9)));
        assert_eq!(read_container(&bytes[..50]), Err(ContainerError::Truncated));
        assert_eq!(read_container(&bytes[..bytes.len() - 3]), Err(ContainerError::Truncated));
        let mut bad = bytes.clone();
        bad[30] ^= 0x10;
        assert_eq!(read_container(&bad), Err(ContainerError::HeaderChecksum));
    }
}
