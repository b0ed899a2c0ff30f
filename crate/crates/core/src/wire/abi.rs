//! Function selectors and static-type ABI call-data decoding.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use num_bigint::{BigInt, BigUint};
use serde::{Serialize, Serializer};
use thiserror::Error;

use super::keccak::keccak256;
use crate::types::Address;

pub type Selector = [u8; 4];

/// First four bytes of the Keccak-256 hash of a canonical signature such as `transfer(address,uint256)`.
pub fn selector_of(signature: &str) -> Selector {
    let h = keccak256(signature.as_bytes());
    [h[0], h[1], h[2], h[3]]
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AbiError {
    #[error("malformed signature {0:?}")]
    Signature(String),
    #[error("call data for {function} needs {needed} bytes, got {got}")]
    Malformed {
        function: String,
        needed: usize,
        got: usize,
    },
    #[error("registry line {line}: {reason}")]
    Registry { line: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AbiType {
    Address,
    Uint(u16),
    Int(u16),
    Bool,
    FixedBytes(u8),
    /// A type this decoder does not interpret; its slot is kept raw.
    Other(String),
}

impl AbiType {
    fn parse(s: &str) -> AbiType {
        let bits = |rest: &str| -> Option<u16> {
            if rest.is_empty() {
                return Some(256);
            }
            rest.parse::<u16>().ok().filter(|b| *b > 0 && *b <= 256 && b % 8 == 0)
        };
        match s {
            "address" => AbiType::Address,
            "bool" => AbiType::Bool,
            _ if s.starts_with("uint") => bits(&s[4..]).map_or(AbiType::Other(s.into()), AbiType::Uint),
            _ if s.starts_with("int") => bits(&s[3..]).map_or(AbiType::Other(s.into()), AbiType::Int),
            _ if s.starts_with("bytes") => match s[5..].parse::<u8>() {
                Ok(n) if (1..=32).contains(&n) => AbiType::FixedBytes(n),
                _ => AbiType::Other(s.into()),
            },
            _ => AbiType::Other(s.into()),
        }
    }

    fn canonical(&self) -> String {
        match self {
            AbiType::Address => "address".into(),
            AbiType::Uint(b) => format!("uint{b}"),
            AbiType::Int(b) => format!("int{b}"),
            AbiType::Bool => "bool".into(),
            AbiType::FixedBytes(n) => format!("bytes{n}"),
            AbiType::Other(s) => s.clone(),
        }
    }
}

/// A function signature with optional parameter names, e.g. `transfer(address _to,uint256 _value)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionSig {
    pub name: String,
    pub params: Vec<(String, AbiType)>,
}

impl FunctionSig {
    pub fn parse(sig: &str) -> Result<FunctionSig, AbiError> {
        let err = || AbiError::Signature(sig.to_string());
        let sig = sig.trim();
        let open = sig.find('(').ok_or_else(err)?;
        let inner = sig[open + 1..].strip_suffix(')').ok_or_else(err)?;
        let name = sig[..open].trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(err());
        }
        let mut params = Vec::new();
        if !inner.trim().is_empty() {
            for (i, part) in inner.split(',').enumerate() {
                let mut words = part.split_whitespace();
                let ty = words.next().ok_or_else(err)?;
                let pname = words.next().map_or_else(|| format!("arg{i}"), str::to_string);
                if words.next().is_some() {
                    return Err(err());
                }
                params.push((pname, AbiType::parse(ty)));
            }
        }
        Ok(FunctionSig {
            name: name.to_string(),
            params,
        })
    }

    /// Signature with types only and no spaces, the form hashed into a selector.
    pub fn canonical(&self) -> String {
        let types: Vec<String> = self.params.iter().map(|(_, t)| t.canonical()).collect();
        format!("{}({})", self.name, types.join(","))
    }

    pub fn selector(&self) -> Selector {
        selector_of(&self.canonical())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AbiValue {
    Address(Address),
    Uint(BigUint),
    Int(BigInt),
    Bool(bool),
    Bytes(Vec<u8>),
    Word([u8; 32]),
}

impl Serialize for AbiValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AbiValue::Address(a) => s.collect_str(a),
            AbiValue::Uint(n) => s.collect_str(n),
            AbiValue::Int(n) => s.collect_str(n),
            AbiValue::Bool(b) => s.serialize_bool(*b),
            AbiValue::Bytes(b) => s.serialize_str(&crate::types::encode_hex(b)),
            AbiValue::Word(w) => s.serialize_str(&crate::types::encode_hex(w)),
        }
    }
}

fn decode_word(ty: &AbiType, word: &[u8; 32]) -> AbiValue {
    match ty {
        AbiType::Address => AbiValue::Address(Address::from_slice(&word[12..]).expect("20 bytes")),
        AbiType::Uint(_) => AbiValue::Uint(BigUint::from_bytes_be(word)),
        AbiType::Int(_) => AbiValue::Int(BigInt::from_signed_bytes_be(word)),
        AbiType::Bool => AbiValue::Bool(word[31] != 0),
        AbiType::FixedBytes(n) => AbiValue::Bytes(word[..*n as usize].to_vec()),
        AbiType::Other(_) => AbiValue::Word(*word),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CallFunction {
    /// Empty call data: a pure value transfer.
    PlainTransfer,
    Known(String),
    Unknown,
}

impl fmt::Display for CallFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallFunction::PlainTransfer => f.write_str("plain-transfer"),
            CallFunction::Known(sig) => f.write_str(sig),
            CallFunction::Unknown => f.write_str("unknown"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AbiArg {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub value: AbiValue,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodedCall {
    #[serde(serialize_with = "ser_selector")]
    pub selector: Option<Selector>,
    pub function: CallFunction,
    pub args: Vec<AbiArg>,
    /// Argument bytes following the selector, always preserved verbatim.
    #[serde(serialize_with = "ser_bytes")]
    pub raw_args: Vec<u8>,
}

fn ser_selector<S: Serializer>(sel: &Option<Selector>, s: S) -> Result<S::Ok, S::Error> {
    match sel {
        Some(b) => s.serialize_str(&crate::types::encode_hex(b)),
        None => s.serialize_none(),
    }
}

fn ser_bytes<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::types::encode_hex(b))
}

impl DecodedCall {
    pub fn arg(&self, name: &str) -> Option<&AbiValue> {
        self.args.iter().find(|a| a.name == name).map(|a| &a.value)
    }

    /// `(recipient, amount)` when this is an ERC20 `transfer(address,uint256)`.
    pub fn as_erc20_transfer(&self) -> Option<(Address, &BigUint)> {
        if self.selector != Some(TRANSFER_SELECTOR) || self.args.len() != 2 {
            return None;
        }
        match (&self.args[0].value, &self.args[1].value) {
            (AbiValue::Address(to), AbiValue::Uint(amount)) => Some((*to, amount)),
            _ => None,
        }
    }
}

pub const TRANSFER_SELECTOR: Selector = [0xa9, 0x05, 0x9c, 0xbb];

const DEFAULT_SIGNATURES: &[&str] = &[
    "transfer(address _to,uint256 _value)",
    "balanceOf(address _owner)",
    "approve(address _spender,uint256 _value)",
    "transferFrom(address _from,address _to,uint256 _value)",
    "allowance(address _owner,address _spender)",
];

/// Selector → signature lookup table.
#[derive(Clone, Debug, Default)]
pub struct SelectorRegistry {
    entries: BTreeMap<Selector, FunctionSig>,
}

impl SelectorRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry preloaded with the common ERC20 functions.
    pub fn with_defaults() -> Self {
        let mut reg = Self::default();
        for sig in DEFAULT_SIGNATURES {
            reg.insert(FunctionSig::parse(sig).expect("built-in signature"));
        }
        reg
    }

    pub fn insert(&mut self, sig: FunctionSig) {
        self.entries.insert(sig.selector(), sig);
    }

    pub fn get(&self, selector: &Selector) -> Option<&FunctionSig> {
        self.entries.get(selector)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Selector, &FunctionSig)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Loads `selector_hex,signature` lines. The signature is everything after the first
    /// comma, so unquoted signatures with commas are fine. A header line is skipped.
    /// Rows whose selector disagrees with the signature hash are rejected.
    pub fn load_csv<R: BufRead>(&mut self, reader: R) -> Result<usize, AbiError> {
        let mut added = 0;
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| AbiError::Registry {
                line: line_no,
                reason: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("selector_hex") {
                continue;
            }
            let bad = |reason: String| AbiError::Registry { line: line_no, reason };
            let (sel_hex, sig) = line
                .split_once(',')
                .ok_or_else(|| bad("expected selector_hex,signature".into()))?;
            let sel_hex = sel_hex.trim().trim_start_matches("0x");
            let sel_bytes = hex::decode(sel_hex).map_err(|e| bad(e.to_string()))?;
            let selector: Selector = sel_bytes
                .try_into()
                .map_err(|_| bad("selector must be 4 bytes".into()))?;
            let sig = FunctionSig::parse(sig.trim().trim_matches('"')).map_err(|e| bad(e.to_string()))?;
            if sig.selector() != selector {
                return Err(bad(format!(
                    "selector {} does not match {}",
                    sel_hex,
                    sig.canonical()
                )));
            }
            self.insert(sig);
            added += 1;
        }
        Ok(added)
    }
}

/// Decodes transaction call data against `registry`.
pub fn decode_call_data(data: &[u8], registry: &SelectorRegistry) -> Result<DecodedCall, AbiError> {
    if data.is_empty() {
        return Ok(DecodedCall {
            selector: None,
            function: CallFunction::PlainTransfer,
            args: vec![],
            raw_args: vec![],
        });
    }
    if data.len() < 4 {
        return Ok(DecodedCall {
            selector: None,
            function: CallFunction::Unknown,
            args: vec![],
            raw_args: data.to_vec(),
        });
    }
    let selector: Selector = data[..4].try_into().expect("4 bytes");
    let body = &data[4..];
    let Some(sig) = registry.get(&selector) else {
        return Ok(DecodedCall {
            selector: Some(selector),
            function: CallFunction::Unknown,
            args: vec![],
            raw_args: body.to_vec(),
        });
    };
    let needed = 32 * sig.params.len();
    if body.len() < needed {
        return Err(AbiError::Malformed {
            function: sig.canonical(),
            needed: needed + 4,
            got: data.len(),
        });
    }
    let args = sig
        .params
        .iter()
        .zip(body.chunks_exact(32))
        .map(|((name, ty), slot)| AbiArg {
            name: name.clone(),
            ty: ty.canonical(),
            value: decode_word(ty, slot.try_into().expect("32-byte slot")),
        })
        .collect();
    Ok(DecodedCall {
        selector: Some(selector),
        function: CallFunction::Known(sig.canonical()),
        args,
        raw_args: body.to_vec(),
    })
}

/// Encodes `transfer(to, amount)` call data.
pub fn encode_transfer(to: &Address, amount: &BigUint) -> Vec<u8> {
    let mut data = TRANSFER_SELECTOR.to_vec();
    let mut slot = [0u8; 32];
    slot[12..].copy_from_slice(&to.0);
    data.extend_from_slice(&slot);
    let amount = amount.to_bytes_be();
    let mut slot = [0u8; 32];
    slot[32 - amount.len()..].copy_from_slice(&amount);
    data.extend_from_slice(&slot);
    data
}
