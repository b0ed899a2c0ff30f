//! Legacy (pre-envelope) Ethereum transactions: decode, re-encode, sender recovery.

use k256::ecdsa::{RecoveryId, Signature, SigningKey, VerifyingKey};
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use super::keccak::keccak256;
use super::rlp::{self, be_minimal, RlpError, RlpItem};
use crate::types::{Address, Wei};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TxError {
    #[error("malformed RLP: {0}")]
    Rlp(#[from] RlpError),
    #[error("typed transaction envelope (type byte {0:#04x}) is not supported")]
    UnsupportedType(u8),
    #[error("expected a list of 9 fields, got {0}")]
    Arity(usize),
    #[error("field `{0}` must be a byte string")]
    NotBytes(&'static str),
    #[error("integer field `{0}` has leading zero bytes")]
    LeadingZero(&'static str),
    #[error("integer field `{0}` exceeds {1} bytes")]
    Oversized(&'static str, usize),
    #[error("`to` must be empty or 20 bytes, got {0}")]
    BadRecipient(usize),
    #[error("v = {0} is neither 27/28 nor an EIP-155 value")]
    InvalidV(u64),
    #[error("signature recovery failed: {0}")]
    Recovery(String),
}

#[derive(Clone, PartialEq, Eq, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecodedTransaction {
    pub nonce: u64,
    pub gas_price: Wei,
    pub gas_limit: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub from: Option<Address>,
    pub to: Option<Address>,
    pub value: Wei,
    #[serde(serialize_with = "ser_hex")]
    pub data: Vec<u8>,
    pub v: u64,
    #[serde(serialize_with = "ser_word")]
    pub r: BigUint,
    #[serde(serialize_with = "ser_word")]
    pub s: BigUint,
}

fn ser_hex<S: serde::Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::types::encode_hex(b))
}

fn ser_word<S: serde::Serializer>(n: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::types::encode_hex(&word_bytes(n)))
}

/// Left-pads to 32 bytes.
fn word_bytes(n: &BigUint) -> [u8; 32] {
    let be = n.to_bytes_be();
    let mut out = [0u8; 32];
    if !n.is_zero() {
        out[32 - be.len()..].copy_from_slice(&be);
    }
    out
}

fn int_bytes(item: &RlpItem, field: &'static str, max: usize) -> Result<Vec<u8>, TxError> {
    let bytes = item.as_bytes().ok_or(TxError::NotBytes(field))?;
    if bytes.first() == Some(&0) {
        return Err(TxError::LeadingZero(field));
    }
    if bytes.len() > max {
        return Err(TxError::Oversized(field, max));
    }
    Ok(bytes.to_vec())
}

fn u64_field(item: &RlpItem, field: &'static str) -> Result<u64, TxError> {
    let b = int_bytes(item, field, 8)?;
    Ok(b.iter().fold(0u64, |acc, &x| (acc << 8) | x as u64))
}

fn uint256_field(item: &RlpItem, field: &'static str) -> Result<BigUint, TxError> {
    Ok(BigUint::from_bytes_be(&int_bytes(item, field, 32)?))
}

fn rlp_uint(n: &BigUint) -> RlpItem {
    if n.is_zero() {
        RlpItem::Bytes(vec![])
    } else {
        RlpItem::Bytes(n.to_bytes_be())
    }
}

fn rlp_u64(n: u64) -> RlpItem {
    RlpItem::Bytes(be_minimal(n))
}

/// Decodes a raw signed legacy transaction. `from` is left unset.
pub fn decode_legacy_tx(raw: &[u8]) -> Result<DecodedTransaction, TxError> {
    if let Some(&first) = raw.first() {
        if first <= 0x7f {
            return Err(TxError::UnsupportedType(first));
        }
    }
    let item = rlp::decode(raw)?;
    let fields = item.as_list().ok_or(TxError::Arity(0))?;
    if fields.len() != 9 {
        return Err(TxError::Arity(fields.len()));
    }
    let to_bytes = fields[3].as_bytes().ok_or(TxError::NotBytes("to"))?;
    let to = match to_bytes.len() {
        0 => None,
        20 => Some(Address::from_slice(to_bytes).expect("20 bytes")),
        n => return Err(TxError::BadRecipient(n)),
    };
    Ok(DecodedTransaction {
        nonce: u64_field(&fields[0], "nonce")?,
        gas_price: Wei(uint256_field(&fields[1], "gasPrice")?),
        gas_limit: u64_field(&fields[2], "gasLimit")?,
        to,
        value: Wei(uint256_field(&fields[4], "value")?),
        data: fields[5]
            .as_bytes()
            .ok_or(TxError::NotBytes("data"))?
            .to_vec(),
        v: u64_field(&fields[6], "v")?,
        r: uint256_field(&fields[7], "r")?,
        s: uint256_field(&fields[8], "s")?,
        from: None,
    })
}

impl DecodedTransaction {
    /// An unsigned transaction; `v`, `r`, `s` are zero until [`sign`](Self::sign).
    pub fn new(
        nonce: u64,
        gas_price: Wei,
        gas_limit: u64,
        to: Option<Address>,
        value: Wei,
        data: Vec<u8>,
    ) -> Self {
        DecodedTransaction {
            nonce,
            gas_price,
            gas_limit,
            from: None,
            to,
            value,
            data,
            v: 0,
            r: BigUint::zero(),
            s: BigUint::zero(),
        }
    }

    fn payload_fields(&self) -> Vec<RlpItem> {
        vec![
            rlp_u64(self.nonce),
            rlp_uint(&self.gas_price.0),
            rlp_u64(self.gas_limit),
            RlpItem::Bytes(self.to.map(|a| a.0.to_vec()).unwrap_or_default()),
            rlp_uint(&self.value.0),
            RlpItem::Bytes(self.data.clone()),
        ]
    }

    /// Full signed RLP encoding.
    pub fn encode(&self) -> Vec<u8> {
        let mut fields = self.payload_fields();
        fields.extend([rlp_u64(self.v), rlp_uint(&self.r), rlp_uint(&self.s)]);
        RlpItem::List(fields).encode()
    }

    /// EIP-155 chain id implied by `v`, or `None` for pre-EIP-155 signatures.
    pub fn chain_id(&self) -> Result<Option<u64>, TxError> {
        match self.v {
            27 | 28 => Ok(None),
            v if v >= 35 => Ok(Some((v - 35) / 2)),
            v => Err(TxError::InvalidV(v)),
        }
    }

    fn recovery_id(&self) -> Result<u8, TxError> {
        match self.chain_id()? {
            None => Ok((self.v - 27) as u8),
            Some(_) => Ok(((self.v - 35) % 2) as u8),
        }
    }

    fn hash_for_chain(&self, chain_id: Option<u64>) -> [u8; 32] {
        let mut fields = self.payload_fields();
        if let Some(id) = chain_id {
            fields.extend([rlp_u64(id), RlpItem::Bytes(vec![]), RlpItem::Bytes(vec![])]);
        }
        keccak256(RlpItem::List(fields).encode())
    }

    /// The digest that was signed: 6-field form for v ∈ {27, 28}, 9-field EIP-155 form otherwise.
    pub fn signing_hash(&self) -> Result<[u8; 32], TxError> {
        Ok(self.hash_for_chain(self.chain_id()?))
    }

    /// Transaction hash (keccak of the signed encoding).
    pub fn hash(&self) -> [u8; 32] {
        keccak256(self.encode())
    }

    /// Signs with `key`, setting `v`, `r`, `s` and `from`.
    pub fn sign(mut self, key: &SigningKey, chain_id: Option<u64>) -> Self {
        let digest = self.hash_for_chain(chain_id);
        let (sig, recid) = key
            .sign_prehash_recoverable(&digest)
            .expect("32-byte prehash is always signable");
        let (r, s) = sig.split_bytes();
        self.r = BigUint::from_bytes_be(&r);
        self.s = BigUint::from_bytes_be(&s);
        let parity = recid.is_y_odd() as u64;
        self.v = match chain_id {
            None => 27 + parity,
            Some(id) => 35 + 2 * id + parity,
        };
        self.from = Some(address_of(key.verifying_key()));
        self
    }
}

/// Ethereum address of a public key: last 20 bytes of keccak256 over the uncompressed point.
pub fn address_of(key: &VerifyingKey) -> Address {
    let point = key.to_encoded_point(false);
    let digest = keccak256(&point.as_bytes()[1..]);
    Address::from_slice(&digest[12..]).expect("20 bytes")
}

/// Recovers the signer's address from `v`, `r`, `s`.
pub fn recover_sender(tx: &DecodedTransaction) -> Result<Address, TxError> {
    let digest = tx.signing_hash()?;
    let recid = RecoveryId::from_byte(tx.recovery_id()?)
        .ok_or_else(|| TxError::Recovery("bad recovery id".into()))?;
    if tx.r.bits() > 256 || tx.s.bits() > 256 {
        return Err(TxError::Recovery("r or s exceeds 32 bytes".into()));
    }
    let sig = Signature::from_scalars(word_bytes(&tx.r), word_bytes(&tx.s))
        .map_err(|e| TxError::Recovery(e.to_string()))?;
    let key = VerifyingKey::recover_from_prehash(&digest, &sig, recid)
        .map_err(|e| TxError::Recovery(e.to_string()))?;
    Ok(address_of(&key))
}

/// Gas price in Gwei as a float (for reporting only).
pub fn gwei(wei: &Wei) -> f64 {
    wei.0.to_f64().unwrap_or(f64::INFINITY) / 1e9
}
