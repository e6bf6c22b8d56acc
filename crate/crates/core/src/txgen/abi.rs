//! The subset of ABI encoding needed to call generated functions.

use std::fmt;
use std::str::FromStr;

use primitive_types::U256;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::evm::word::{twos_neg, word_to_bytes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamType {
    Uint(u16),
    Int(u16),
    Address,
    Bool,
    FixedBytes(u8),
    String,
    Bytes,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbiError {
    #[error("unsupported parameter type `{0}`")]
    Unsupported(String),
    #[error("calldata too short to decode")]
    Truncated,
}

impl ParamType {
    pub fn is_dynamic(self) -> bool {
        matches!(self, ParamType::String | ParamType::Bytes)
    }

    /// Bit width for numeric kinds, byte count for `bytesN`.
    pub fn width(self) -> u16 {
        match self {
            ParamType::Uint(b) | ParamType::Int(b) => b,
            ParamType::Address => 160,
            ParamType::Bool => 1,
            ParamType::FixedBytes(n) => n as u16,
            ParamType::String | ParamType::Bytes => 0,
        }
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamType::Uint(b) => write!(f, "uint{b}"),
            ParamType::Int(b) => write!(f, "int{b}"),
            ParamType::Address => f.write_str("address"),
            ParamType::Bool => f.write_str("bool"),
            ParamType::FixedBytes(n) => write!(f, "bytes{n}"),
            ParamType::String => f.write_str("string"),
            ParamType::Bytes => f.write_str("bytes"),
        }
    }
}

impl FromStr for ParamType {
    type Err = AbiError;

    fn from_str(s: &str) -> Result<Self, AbiError> {
        let unsupported = || AbiError::Unsupported(s.to_string());
        let bits = |rest: &str| -> Result<u16, AbiError> {
            if rest.is_empty() {
                return Ok(256);
            }
            let b: u16 = rest.parse().map_err(|_| unsupported())?;
            if b == 0 || b > 256 || !b.is_multiple_of(8) {
                return Err(unsupported());
            }
            Ok(b)
        };
        match s {
            "address" => Ok(ParamType::Address),
            "bool" => Ok(ParamType::Bool),
            "string" => Ok(ParamType::String),
            "bytes" => Ok(ParamType::Bytes),
            _ => {
                if let Some(rest) = s.strip_prefix("uint") {
                    Ok(ParamType::Uint(bits(rest)?))
                } else if let Some(rest) = s.strip_prefix("int") {
                    Ok(ParamType::Int(bits(rest)?))
                } else if let Some(rest) = s.strip_prefix("bytes") {
                    let n: u8 = rest.parse().map_err(|_| unsupported())?;
                    if n == 0 || n > 32 {
                        return Err(unsupported());
                    }
                    Ok(ParamType::FixedBytes(n))
                } else {
                    Err(unsupported())
                }
            }
        }
    }
}

impl Serialize for ParamType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ParamType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AbiValue {
    Word(U256),
    Dynamic(Vec<u8>),
}

const MAX_DYNAMIC_LEN: usize = 64;

fn random_word<R: Rng + ?Sized>(rng: &mut R) -> U256 {
    let mut b = [0u8; 32];
    rng.fill(&mut b);
    U256::from_big_endian(&b)
}

fn low_mask(bits: u16) -> U256 {
    if bits >= 256 {
        U256::MAX
    } else {
        (U256::one() << bits as usize) - U256::one()
    }
}

/// Draws a value uniformly over the valid range of `ty`. Dynamic kinds get a
/// random positive length, then random content.
pub fn random_value<R: Rng + ?Sized>(ty: ParamType, rng: &mut R) -> AbiValue {
    match ty {
        ParamType::Uint(bits) => AbiValue::Word(random_word(rng) & low_mask(bits)),
        ParamType::Int(bits) => {
            let raw = random_word(rng) & low_mask(bits);
            // sign-extend from the top bit of the chosen width
            let v = if bits < 256 && raw.bit(bits as usize - 1) {
                raw | !low_mask(bits)
            } else {
                raw
            };
            AbiValue::Word(v)
        }
        ParamType::Address => AbiValue::Word(random_word(rng) & low_mask(160)),
        ParamType::Bool => AbiValue::Word(U256::from(rng.gen_range(0u8..=1))),
        ParamType::FixedBytes(n) => {
            let mut b = [0u8; 32];
            rng.fill(&mut b[..n as usize]);
            AbiValue::Word(U256::from_big_endian(&b))
        }
        ParamType::String => {
            const ALPHABET: &[u8] =
                b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 ";
            let len = rng.gen_range(1..=MAX_DYNAMIC_LEN);
            AbiValue::Dynamic(
                (0..len)
                    .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())])
                    .collect(),
            )
        }
        ParamType::Bytes => {
            let len = rng.gen_range(1..=MAX_DYNAMIC_LEN);
            let mut v = vec![0u8; len];
            rng.fill(&mut v[..]);
            AbiValue::Dynamic(v)
        }
    }
}

/// Head/tail encoding of `values` (without selector).
pub fn encode_params(values: &[AbiValue]) -> Vec<u8> {
    let head_len = 32 * values.len();
    let mut head = Vec::with_capacity(head_len);
    let mut tail = Vec::new();
    for v in values {
        match v {
            AbiValue::Word(w) => head.extend_from_slice(&word_to_bytes(*w)),
            AbiValue::Dynamic(data) => {
                head.extend_from_slice(&word_to_bytes(U256::from(head_len + tail.len())));
                tail.extend_from_slice(&word_to_bytes(U256::from(data.len())));
                tail.extend_from_slice(data);
                tail.resize(tail.len().div_ceil(32) * 32, 0);
            }
        }
    }
    head.extend(tail);
    head
}

/// Decodes parameters produced by [`encode_params`].
pub fn decode_params(types: &[ParamType], data: &[u8]) -> Result<Vec<AbiValue>, AbiError> {
    let word_at = |off: usize| -> Result<U256, AbiError> {
        data.get(off..off + 32)
            .map(U256::from_big_endian)
            .ok_or(AbiError::Truncated)
    };
    let mut out = Vec::with_capacity(types.len());
    for (i, ty) in types.iter().enumerate() {
        let w = word_at(32 * i)?;
        if ty.is_dynamic() {
            let off = w.low_u64() as usize;
            let len = word_at(off)?.low_u64() as usize;
            let bytes = data
                .get(off + 32..off + 32 + len)
                .ok_or(AbiError::Truncated)?;
            out.push(AbiValue::Dynamic(bytes.to_vec()));
        } else {
            out.push(AbiValue::Word(w));
        }
    }
    Ok(out)
}

/// Signed interpretation helper for tests and diagnostics.
pub fn is_in_int_range(v: U256, bits: u16) -> bool {
    if bits >= 256 {
        return true;
    }
    let half = U256::one() << (bits as usize - 1);
    v < half || twos_neg(v) <= half
}
