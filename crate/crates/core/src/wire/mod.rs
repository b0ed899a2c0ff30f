//! Byte-level decoding of captured payloads.

pub mod abi;
pub mod keccak;
pub mod rlp;
pub mod tx;

pub use abi::{decode_call_data, selector_of, CallFunction, DecodedCall, SelectorRegistry};
pub use keccak::keccak256;
pub use rlp::{RlpError, RlpItem};
pub use tx::{decode_legacy_tx, recover_sender, DecodedTransaction, TxError};

use crate::types::decode_hex;

/// Decodes a `0x`-hex raw transaction and recovers its sender.
pub fn decode_raw_hex(raw: &str) -> Result<DecodedTransaction, TxError> {
    let bytes = decode_hex(raw).map_err(|e| TxError::Recovery(format!("bad hex: {e}")))?;
    let mut tx = decode_legacy_tx(&bytes)?;
    tx.from = Some(recover_sender(&tx)?);
    Ok(tx)
}
