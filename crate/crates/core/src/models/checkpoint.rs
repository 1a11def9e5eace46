//! Model checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "OSM1" | kind u8 | alphabet u32 | latent u32 | params f64 * n | crc32 u32
//! ```
//!
//! `kind` is 0 for an order-0 context model, 1 for order-1 and 2 for the
//! toy VAE (`latent` is 0 for context models). The CRC covers every byte
//! before it.

use thiserror::Error;

use super::{ContextModel, ContextOrder, Model, ModelError, ToyVae};
use crate::checksum::crc32;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OSM1";
const HEADER_LEN: usize = 4 + 1 + 4 + 4;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unknown model kind {0}")]
    UnknownKind(u8),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn kind_and_dims(model: &Model) -> (u8, u32, u32) {
    match model {
        Model::Context(m) => {
            let kind = match m.order() {
                ContextOrder::Zero => 0,
                ContextOrder::One => 1,
            };
            (kind, m.alphabet_size() as u32, 0)
        }
        Model::Vae(m) => (2, m.alphabet_size() as u32, m.latent_size() as u32),
    }
}

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let (kind, alphabet, latent) = kind_and_dims(model);
    let params = model.params();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len() + 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(kind);
    out.extend_from_slice(&alphabet.to_le_bytes());
    out.extend_from_slice(&latent.to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model, CheckpointError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(CheckpointError::Truncated);
    }
    let kind = bytes[4];
    let alphabet = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let latent = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let expected = match kind {
        0 => alphabet,
        1 => (alphabet + 1) * alphabet,
        2 => latent + 2 * latent * alphabet,
        other => return Err(CheckpointError::UnknownKind(other)),
    };
    let body_end = HEADER_LEN + 8 * expected;
    if bytes.len() < body_end + 4 {
        return Err(CheckpointError::Truncated);
    }
    let stored = u32::from_le_bytes(bytes[body_end..body_end + 4].try_into().unwrap());
    let computed = crc32(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let params: Vec<f64> = bytes[HEADER_LEN..body_end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let model = match kind {
        0 => Model::Context(ContextModel::from_logits(ContextOrder::Zero, alphabet, params)?),
        1 => Model::Context(ContextModel::from_logits(ContextOrder::One, alphabet, params)?),
        _ => Model::Vae(ToyVae::from_params(alphabet, latent, params)?),
    };
    Ok(model)
}
