//! Shared primitive types: addresses, 32-byte hashes, Wei amounts.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{Num, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HexError {
    #[error("missing 0x prefix")]
    MissingPrefix,
    #[error("invalid hex digit")]
    InvalidDigit,
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("invalid quantity {0:?}")]
    Quantity(String),
}

fn strip_0x(s: &str) -> Option<&str> {
    s.strip_prefix("0x").or_else(|| s.strip_prefix("0X"))
}

/// Decodes a `0x`-prefixed hex string. Odd digit counts are left-padded with a zero nibble.
pub fn decode_hex(s: &str) -> Result<Vec<u8>, HexError> {
    let digits = strip_0x(s.trim()).ok_or(HexError::MissingPrefix)?;
    if digits.len() % 2 == 1 {
        hex::decode(format!("0{digits}")).map_err(|_| HexError::InvalidDigit)
    } else {
        hex::decode(digits).map_err(|_| HexError::InvalidDigit)
    }
}

pub fn encode_hex(bytes: &[u8]) -> String {
    format!("0x{}", hex::encode(bytes))
}

/// Parses a JSON-RPC quantity (`0x`-hex) or a plain decimal string.
pub fn parse_quantity(s: &str) -> Result<BigUint, HexError> {
    let s = s.trim();
    let parsed = match strip_0x(s) {
        Some("") => return Ok(BigUint::zero()),
        Some(digits) => BigUint::from_str_radix(digits, 16),
        None => BigUint::from_str_radix(s, 10),
    };
    parsed.map_err(|_| HexError::Quantity(s.to_string()))
}

/// `0x`-hex quantity encoding without leading zeros (`0x0` for zero).
pub fn quantity_hex(n: &BigUint) -> String {
    format!("0x{}", n.to_str_radix(16))
}

macro_rules! fixed_bytes {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn from_slice(bytes: &[u8]) -> Result<Self, HexError> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| HexError::Length {
                    expected: $len,
                    actual: bytes.len(),
                })?;
                Ok(Self(arr))
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }
        }

        impl FromStr for $name {
            type Err = HexError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let digits = strip_0x(s.trim()).ok_or(HexError::MissingPrefix)?;
                if digits.len() != 2 * $len {
                    return Err(HexError::Length {
                        expected: $len,
                        actual: digits.len() / 2,
                    });
                }
                let bytes = hex::decode(digits).map_err(|_| HexError::InvalidDigit)?;
                Self::from_slice(&bytes)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{}", hex::encode(self.0))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::Display::fmt(self, f)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

fixed_bytes!(Address, 20);
fixed_bytes!(H256, 32);

/// An amount of Wei. Serialized as a decimal string; accepts decimal or `0x`-hex on input.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Wei(pub BigUint);

impl Wei {
    pub fn zero() -> Self {
        Wei(BigUint::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn from_ether(ether: u64) -> Self {
        Wei(BigUint::from(ether) * BigUint::from(10u64).pow(18))
    }
}

impl From<u64> for Wei {
    fn from(v: u64) -> Self {
        Wei(BigUint::from(v))
    }
}

impl From<BigUint> for Wei {
    fn from(v: BigUint) -> Self {
        Wei(v)
    }
}

impl std::ops::Add<&Wei> for Wei {
    type Output = Wei;
    fn add(self, rhs: &Wei) -> Wei {
        Wei(self.0 + &rhs.0)
    }
}

impl std::ops::AddAssign<&Wei> for Wei {
    fn add_assign(&mut self, rhs: &Wei) {
        self.0 += &rhs.0;
    }
}

impl std::iter::Sum for Wei {
    fn sum<I: Iterator<Item = Wei>>(iter: I) -> Self {
        iter.fold(Wei::zero(), |acc, w| acc + &w)
    }
}

impl<'a> std::iter::Sum<&'a Wei> for Wei {
    fn sum<I: Iterator<Item = &'a Wei>>(iter: I) -> Self {
        iter.fold(Wei::zero(), |acc, w| acc + w)
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Debug for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} wei", self.0)
    }
}

impl FromStr for Wei {
    type Err = HexError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_quantity(s).map(Wei)
    }
}

impl Serialize for Wei {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Wei {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Str(String),
            Num(u64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Num(n) => Ok(Wei::from(n)),
        }
    }
}
