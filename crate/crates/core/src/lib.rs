//! Lossless compression with entropy coders and one-shot online adaptation.
//!
//! A pretrained probabilistic model is adapted batch by batch while data is
//! coded. The decoder replays the identical deterministic adaptation on the
//! batches it has already recovered, so the adapted model never has to be
//! stored.
//!
//! * [`prob`]: pmfs and their integer quantization.
//! * [`coders`]: Huffman, arithmetic coding and rANS.
//! * [`models`]: toy context models and a single-latent VAE with exact
//!   likelihoods, ELBO and gradients.
//! * [`adapt`]: deterministic optimizers and the per-batch update schedule.
//! * [`osoa`]: the encode/decode pipelines, FILO chunking and bits-back.
//! * [`container`]: the on-disk format.
//! * [`bench`]: synthetic shifted-source benchmark.

pub mod adapt;
pub mod bench;
pub mod checksum;
pub mod coders;
pub mod container;
pub mod models;
pub mod osoa;
pub mod prob;

pub use prob::Symbol;
