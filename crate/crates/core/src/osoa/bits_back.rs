//! Bits-back coding of single symbols with a one-latent model over rANS.
//!
//! Encoding `x`: decode `z` with `q̄(z|x)` (borrowing bits), encode `x` with
//! `p̄(x|z)`, encode `z` with `p̄(z)`. Decoding runs the mirror image.

use super::reservoir::Reservoir;
use super::OsoaError;
use crate::coders::{CoderError, StreamRans};
use crate::models::VaeTables;
use crate::prob::Symbol;

pub fn bits_back_encode(
    rans: &mut StreamRans,
    tables: &VaeTables,
    x: Symbol,
    reservoir: &mut Reservoir,
) -> Result<(), OsoaError> {
    let posterior = tables.posterior.get(x).ok_or(CoderError::UnknownSymbol(x))?;
    let z = rans
        .pop_or_borrow(posterior, || reservoir.next_word())
        .map_err(|e| match e {
            CoderError::Underflow => OsoaError::ReservoirExhausted,
            other => OsoaError::Coder(other),
        })?;
    rans.push(&tables.likelihood[z], x)?;
    rans.push(&tables.prior, z)?;
    Ok(())
}

pub fn bits_back_decode(rans: &mut StreamRans, tables: &VaeTables) -> Result<Symbol, OsoaError> {
    let z = rans.pop(&tables.prior)?;
    let x = rans.pop(&tables.likelihood[z])?;
    rans.push(&tables.posterior[x], z)?;
    Ok(x)
}

/// Net cost of a bits-back stream: emitted bits minus borrowed bits.
pub fn net_bits(rans: &StreamRans, reservoir: &Reservoir) -> i64 {
    rans.bit_len() as i64 - reservoir.drawn_bits() as i64
}
