//! Minimal Solidity ABI codec: type grammar, a bounds-checked best-effort
//! decoder that tracks byte coverage, and a canonical encoder.

use std::fmt;

use primitive_types::U256;
use serde::{Deserialize, Serialize};

use crate::primitives::{encode_0x, Address};

/// Tuples nest at most this deep (the outermost parameter list is not counted).
pub const MAX_TUPLE_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbiType {
    Address,
    Uint(u16),
    Int(u16),
    Bool,
    Bytes,
    FixedBytes(u8),
    String,
    Array(Box<AbiType>),
    FixedArray(Box<AbiType>, usize),
    Tuple(Vec<AbiType>),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SignatureError {
    #[error("malformed signature `{0}`")]
    Malformed(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("tuple nesting deeper than {MAX_TUPLE_DEPTH}")]
    TooDeep,
}

impl AbiType {
    pub fn is_dynamic(&self) -> bool {
        match self {
            AbiType::Bytes | AbiType::String | AbiType::Array(_) => true,
            AbiType::FixedArray(inner, _) => inner.is_dynamic(),
            AbiType::Tuple(items) => items.iter().any(AbiType::is_dynamic),
            _ => false,
        }
    }

    /// Head size in bytes of a static type.
    fn static_size(&self) -> usize {
        match self {
            AbiType::FixedArray(inner, n) => inner.static_size() * n,
            AbiType::Tuple(items) => items.iter().map(AbiType::static_size).sum(),
            _ => 32,
        }
    }

    fn head_size(&self) -> usize {
        if self.is_dynamic() {
            32
        } else {
            self.static_size()
        }
    }

    pub fn parse(s: &str) -> Result<Self, SignatureError> {
        parse_type(s.trim(), 0)
    }
}

impl fmt::Display for AbiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbiType::Address => write!(f, "address"),
            AbiType::Uint(n) => write!(f, "uint{n}"),
            AbiType::Int(n) => write!(f, "int{n}"),
            AbiType::Bool => write!(f, "bool"),
            AbiType::Bytes => write!(f, "bytes"),
            AbiType::FixedBytes(n) => write!(f, "bytes{n}"),
            AbiType::String => write!(f, "string"),
            AbiType::Array(inner) => write!(f, "{inner}[]"),
            AbiType::FixedArray(inner, n) => write!(f, "{inner}[{n}]"),
            AbiType::Tuple(items) => {
                write!(f, "(")?;
                for (i, t) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Splits a comma-separated list at nesting depth zero.
fn split_top_level(s: &str) -> Result<Vec<&str>, SignatureError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(SignatureError::Malformed(s.to_string()));
                }
            }
            ',' if depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(SignatureError::Malformed(s.to_string()));
    }
    parts.push(&s[start..]);
    Ok(parts)
}

fn parse_type(s: &str, depth: usize) -> Result<AbiType, SignatureError> {
    if let Some(stripped) = s.strip_suffix(']') {
        let open = stripped
            .rfind('[')
            .ok_or_else(|| SignatureError::Malformed(s.to_string()))?;
        let inner = parse_type(&stripped[..open], depth)?;
        let dim = &stripped[open + 1..];
        return if dim.is_empty() {
            Ok(AbiType::Array(Box::new(inner)))
        } else {
            let n: usize = dim
                .parse()
                .map_err(|_| SignatureError::Malformed(s.to_string()))?;
            if n == 0 {
                return Err(SignatureError::Malformed(s.to_string()));
            }
            Ok(AbiType::FixedArray(Box::new(inner), n))
        };
    }
    if let Some(body) = s.strip_prefix('(') {
        let body = body
            .strip_suffix(')')
            .ok_or_else(|| SignatureError::Malformed(s.to_string()))?;
        if depth >= MAX_TUPLE_DEPTH {
            return Err(SignatureError::TooDeep);
        }
        let items = split_top_level(body)?
            .into_iter()
            .map(|p| parse_type(p.trim(), depth + 1))
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(AbiType::Tuple(items));
    }
    let bits = |prefix: &str| -> Result<Option<u16>, SignatureError> {
        let Some(rest) = s.strip_prefix(prefix) else {
            return Ok(None);
        };
        if rest.is_empty() {
            return Ok(Some(256));
        }
        match rest.parse::<u16>() {
            Ok(n) if n > 0 && n <= 256 && n % 8 == 0 => Ok(Some(n)),
            _ => Err(SignatureError::UnknownType(s.to_string())),
        }
    };
    match s {
        "address" => Ok(AbiType::Address),
        "bool" => Ok(AbiType::Bool),
        "bytes" => Ok(AbiType::Bytes),
        "string" => Ok(AbiType::String),
        _ if s.starts_with("uint") => Ok(AbiType::Uint(bits("uint")?.unwrap_or(256))),
        _ if s.starts_with("int") => Ok(AbiType::Int(bits("int")?.unwrap_or(256))),
        _ if s.starts_with("bytes") => match s["bytes".len()..].parse::<u8>() {
            Ok(n) if (1..=32).contains(&n) => Ok(AbiType::FixedBytes(n)),
            _ => Err(SignatureError::UnknownType(s.to_string())),
        },
        _ => Err(SignatureError::UnknownType(s.to_string())),
    }
}

/// Parses `name(type,...)` into the function name and its parameter types.
/// The signature must already be canonical (no spaces, no parameter names).
pub fn parse_signature(sig: &str) -> Result<(String, Vec<AbiType>), SignatureError> {
    let open = sig
        .find('(')
        .ok_or_else(|| SignatureError::Malformed(sig.to_string()))?;
    let name = &sig[..open];
    let params = sig[open..]
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| SignatureError::Malformed(sig.to_string()))?;
    if name.is_empty()
        || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        || sig.contains(char::is_whitespace)
    {
        return Err(SignatureError::Malformed(sig.to_string()));
    }
    let types = split_top_level(params)?
        .into_iter()
        .map(|p| parse_type(p, 0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.to_string(), types))
}

/// A decoded ABI value. Signed integers keep their raw two's-complement word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum AbiValue {
    Address(Address),
    #[serde(with = "crate::primitives::u256_dec")]
    Uint(U256),
    #[serde(with = "crate::primitives::u256_dec")]
    Int(U256),
    Bool(bool),
    #[serde(with = "crate::primitives::hex_bytes")]
    Bytes(Vec<u8>),
    #[serde(with = "crate::primitives::hex_bytes")]
    FixedBytes(Vec<u8>),
    String(String),
    Array(Vec<AbiValue>),
    Tuple(Vec<AbiValue>),
}

impl AbiValue {
    pub fn as_address(&self) -> Option<Address> {
        match self {
            AbiValue::Address(a) => Some(*a),
            _ => None,
        }
    }

    pub fn as_uint(&self) -> Option<U256> {
        match self {
            AbiValue::Uint(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            AbiValue::Bool(b) => Some(*b),
            _ => None,
        }
    }
}

impl fmt::Display for AbiValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbiValue::Address(a) => write!(f, "{a}"),
            AbiValue::Uint(v) | AbiValue::Int(v) => write!(f, "{v}"),
            AbiValue::Bool(b) => write!(f, "{b}"),
            AbiValue::Bytes(b) | AbiValue::FixedBytes(b) => write!(f, "{}", encode_0x(b)),
            AbiValue::String(s) => write!(f, "{s:?}"),
            AbiValue::Array(items) | AbiValue::Tuple(items) => {
                write!(f, "[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("read past end of calldata at byte {0}")]
    OutOfBounds(usize),
    #[error("offset or length word does not fit the calldata")]
    BadOffset,
    #[error("decode work budget exhausted")]
    WorkLimit,
}

/// Result of a best-effort decode over the argument region (selector excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct ArgDecode {
    pub values: Result<Vec<AbiValue>, DecodeError>,
    /// Distinct argument bytes read by the decoder, including on failure.
    pub covered: usize,
    /// Every value fit its declared width and padding was clean.
    pub plausible: bool,
}

struct Decoder<'a> {
    data: &'a [u8],
    covered: Vec<bool>,
    plausible: bool,
    budget: usize,
}

impl<'a> Decoder<'a> {
    fn new(data: &'a [u8]) -> Self {
        Decoder {
            data,
            covered: vec![false; data.len()],
            plausible: true,
            budget: data.len().saturating_mul(8) + 4096,
        }
    }

    fn spend(&mut self, n: usize) -> Result<(), DecodeError> {
        self.budget = self.budget.checked_sub(n).ok_or(DecodeError::WorkLimit)?;
        Ok(())
    }

    fn take(&mut self, at: usize, len: usize) -> Result<&'a [u8], DecodeError> {
        let end = at.checked_add(len).ok_or(DecodeError::OutOfBounds(at))?;
        if end > self.data.len() {
            return Err(DecodeError::OutOfBounds(at));
        }
        self.spend(len.max(1))?;
        self.covered[at..end].iter_mut().for_each(|c| *c = true);
        Ok(&self.data[at..end])
    }

    fn word(&mut self, at: usize) -> Result<[u8; 32], DecodeError> {
        let w = self.take(at, 32)?;
        Ok(w.try_into().expect("32-byte slice"))
    }

    /// Reads an offset or length word; it must be small enough to index the data.
    fn size_word(&mut self, at: usize) -> Result<usize, DecodeError> {
        let w = U256::from_big_endian(&self.word(at)?);
        if w > U256::from(self.data.len()) {
            return Err(DecodeError::BadOffset);
        }
        Ok(w.as_usize())
    }

    fn tuple(&mut self, types: &[AbiType], base: usize) -> Result<Vec<AbiValue>, DecodeError> {
        let mut out = Vec::with_capacity(types.len());
        let mut pos = base;
        for t in types {
            if t.is_dynamic() {
                let off = self.size_word(pos)?;
                let at = base.checked_add(off).ok_or(DecodeError::BadOffset)?;
                out.push(self.dynamic(t, at)?);
            } else {
                out.push(self.fixed(t, pos)?);
            }
            pos = pos
                .checked_add(t.head_size())
                .ok_or(DecodeError::OutOfBounds(pos))?;
        }
        Ok(out)
    }

    fn dynamic(&mut self, t: &AbiType, at: usize) -> Result<AbiValue, DecodeError> {
        match t {
            AbiType::Bytes | AbiType::String => {
                let len = self.size_word(at)?;
                let padded = len.div_ceil(32) * 32;
                let body = self.take(at + 32, len)?;
                if padded > len {
                    // Padding past the end is tolerated but counts against plausibility.
                    match self.take(at + 32 + len, padded - len) {
                        Ok(pad) => {
                            if pad.iter().any(|b| *b != 0) {
                                self.plausible = false;
                            }
                        }
                        Err(_) => self.plausible = false,
                    }
                }
                if matches!(t, AbiType::String) {
                    match std::str::from_utf8(body) {
                        Ok(s) => Ok(AbiValue::String(s.to_string())),
                        Err(_) => {
                            self.plausible = false;
                            Ok(AbiValue::String(String::from_utf8_lossy(body).into_owned()))
                        }
                    }
                } else {
                    Ok(AbiValue::Bytes(body.to_vec()))
                }
            }
            AbiType::Array(inner) => {
                let len = self.size_word(at)?;
                let remaining = self.data.len().saturating_sub(at + 32);
                if len.saturating_mul(inner.head_size()) > remaining {
                    return Err(DecodeError::BadOffset);
                }
                self.spend(len)?;
                let types = vec![(**inner).clone(); len];
                Ok(AbiValue::Array(self.tuple(&types, at + 32)?))
            }
            AbiType::FixedArray(inner, n) => {
                self.spend(*n)?;
                let types = vec![(**inner).clone(); *n];
                Ok(AbiValue::Array(self.tuple(&types, at)?))
            }
            AbiType::Tuple(items) => Ok(AbiValue::Tuple(self.tuple(items, at)?)),
            _ => self.fixed(t, at),
        }
    }

    fn fixed(&mut self, t: &AbiType, at: usize) -> Result<AbiValue, DecodeError> {
        match t {
            AbiType::Address => {
                let w = self.word(at)?;
                if w[..12].iter().any(|b| *b != 0) {
                    self.plausible = false;
                }
                let addr = Address::from_slice(&w[12..]).expect("20 bytes");
                if addr.is_zero() {
                    self.plausible = false;
                }
                Ok(AbiValue::Address(addr))
            }
            AbiType::Uint(bits) => {
                let v = U256::from_big_endian(&self.word(at)?);
                if *bits < 256 && v.bits() > *bits as usize {
                    self.plausible = false;
                }
                Ok(AbiValue::Uint(v))
            }
            AbiType::Int(bits) => {
                let w = self.word(at)?;
                if *bits < 256 {
                    // High bytes must be a sign extension of the value bits.
                    let nbytes = (*bits / 8) as usize;
                    let sign = w[32 - nbytes] & 0x80 != 0;
                    let fill = if sign { 0xff } else { 0x00 };
                    if w[..32 - nbytes].iter().any(|b| *b != fill) {
                        self.plausible = false;
                    }
                }
                Ok(AbiValue::Int(U256::from_big_endian(&w)))
            }
            AbiType::Bool => {
                let w = self.word(at)?;
                let v = U256::from_big_endian(&w);
                if v > U256::one() {
                    self.plausible = false;
                }
                Ok(AbiValue::Bool(!v.is_zero()))
            }
            AbiType::FixedBytes(n) => {
                let w = self.word(at)?;
                let n = *n as usize;
                if w[n..].iter().any(|b| *b != 0) {
                    self.plausible = false;
                }
                Ok(AbiValue::FixedBytes(w[..n].to_vec()))
            }
            AbiType::FixedArray(inner, n) => {
                let types = vec![(**inner).clone(); *n];
                Ok(AbiValue::Array(self.tuple(&types, at)?))
            }
            AbiType::Tuple(items) => Ok(AbiValue::Tuple(self.tuple(items, at)?)),
            AbiType::Bytes | AbiType::String | AbiType::Array(_) => self.dynamic(t, at),
        }
    }
}

/// Best-effort decode of `data` (arguments only) against `types`. Never panics.
pub fn decode_args(types: &[AbiType], data: &[u8]) -> ArgDecode {
    let mut d = Decoder::new(data);
    let values = d.tuple(types, 0);
    let covered = d.covered.iter().filter(|c| **c).count();
    ArgDecode {
        values,
        covered,
        plausible: d.plausible,
    }
}

/// Canonical ABI encoding of a parameter list.
pub fn encode_args(values: &[AbiValue]) -> Vec<u8> {
    encode_tuple(values)
}

fn value_is_dynamic(v: &AbiValue) -> bool {
    match v {
        AbiValue::Bytes(_) | AbiValue::String(_) | AbiValue::Array(_) => true,
        AbiValue::Tuple(items) => items.iter().any(value_is_dynamic),
        _ => false,
    }
}

fn encode_tuple(values: &[AbiValue]) -> Vec<u8> {
    let heads: Vec<Option<Vec<u8>>> = values
        .iter()
        .map(|v| (!value_is_dynamic(v)).then(|| encode_static(v)))
        .collect();
    let head_len: usize = heads
        .iter()
        .map(|h| h.as_ref().map_or(32, Vec::len))
        .sum();
    let mut head = Vec::with_capacity(head_len);
    let mut tail = Vec::new();
    for (v, h) in values.iter().zip(heads) {
        match h {
            Some(h) => head.extend_from_slice(&h),
            None => {
                head.extend_from_slice(&uint_word(U256::from(head_len + tail.len())));
                tail.extend_from_slice(&encode_dynamic(v));
            }
        }
    }
    head.extend_from_slice(&tail);
    head
}

fn encode_static(v: &AbiValue) -> Vec<u8> {
    match v {
        AbiValue::Address(a) => a.to_word().to_vec(),
        AbiValue::Uint(x) | AbiValue::Int(x) => uint_word(*x).to_vec(),
        AbiValue::Bool(b) => uint_word(U256::from(*b as u8)).to_vec(),
        AbiValue::FixedBytes(b) => {
            let mut w = [0u8; 32];
            let n = b.len().min(32);
            w[..n].copy_from_slice(&b[..n]);
            w.to_vec()
        }
        AbiValue::Tuple(items) => encode_tuple(items),
        AbiValue::Bytes(_) | AbiValue::String(_) | AbiValue::Array(_) => encode_dynamic(v),
    }
}

fn encode_dynamic(v: &AbiValue) -> Vec<u8> {
    match v {
        AbiValue::Bytes(b) => encode_byte_string(b),
        AbiValue::String(s) => encode_byte_string(s.as_bytes()),
        AbiValue::Array(items) => {
            let mut out = uint_word(U256::from(items.len())).to_vec();
            out.extend_from_slice(&encode_tuple(items));
            out
        }
        AbiValue::Tuple(items) => encode_tuple(items),
        _ => encode_static(v),
    }
}

fn encode_byte_string(b: &[u8]) -> Vec<u8> {
    let mut out = uint_word(U256::from(b.len())).to_vec();
    out.extend_from_slice(b);
    out.resize(32 + b.len().div_ceil(32) * 32, 0);
    out
}

pub fn uint_word(v: U256) -> [u8; 32] {
    v.to_big_endian()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(b: u8) -> Address {
        Address([b; 20])
    }

    #[test]
    fn parses_nested_signature() {
        let (name, types) =
            parse_signature("exactInputSingle((address,address,uint24,address,uint256,uint256,uint256,uint160))")
                .unwrap();
        assert_eq!(name, "exactInputSingle");
        assert_eq!(types.len(), 1);
        assert!(matches!(&types[0], AbiType::Tuple(items) if items.len() == 8));
        assert_eq!(
            types[0].to_string(),
            "(address,address,uint24,address,uint256,uint256,uint256,uint160)"
        );
    }

    #[test]
    fn rejects_bad_signatures() {
        assert!(parse_signature("approve(address, uint256)").is_err());
        assert!(parse_signature("approve(address,uint257)").is_err());
        assert!(parse_signature("(address)").is_err());
        assert!(parse_signature("f(((((uint256)))))").is_err());
        assert!(parse_signature("f(uint256[0])").is_err());
    }

    #[test]
    fn static_roundtrip_is_fully_covered() {
        let types = vec![AbiType::Address, AbiType::Uint(256)];
        let values = vec![AbiValue::Address(addr(7)), AbiValue::Uint(U256::MAX)];
        let data = encode_args(&values);
        assert_eq!(data.len(), 64);
        let d = decode_args(&types, &data);
        assert_eq!(d.values.unwrap(), values);
        assert_eq!(d.covered, 64);
        assert!(d.plausible);
    }

    #[test]
    fn dynamic_roundtrip() {
        let types = vec![
            AbiType::Uint(256),
            AbiType::Array(Box::new(AbiType::Address)),
            AbiType::Bytes,
            AbiType::String,
        ];
        let values = vec![
            AbiValue::Uint(U256::from(5)),
            AbiValue::Array(vec![AbiValue::Address(addr(1)), AbiValue::Address(addr(2))]),
            AbiValue::Bytes(vec![1, 2, 3]),
            AbiValue::String("hello".into()),
        ];
        let data = encode_args(&values);
        let d = decode_args(&types, &data);
        assert_eq!(d.values.unwrap(), values);
        assert_eq!(d.covered, data.len());
        assert!(d.plausible);
    }

    #[test]
    fn dirty_address_word_is_implausible_but_decodes() {
        let mut data = encode_args(&[AbiValue::Address(addr(3))]);
        data[0] = 0xff;
        let d = decode_args(&[AbiType::Address], &data);
        assert_eq!(d.values.unwrap(), vec![AbiValue::Address(addr(3))]);
        assert!(!d.plausible);
    }

    #[test]
    fn narrow_uint_overflow_is_implausible() {
        let data = encode_args(&[AbiValue::Uint(U256::from(256))]);
        assert!(!decode_args(&[AbiType::Uint(8)], &data).plausible);
        assert!(decode_args(&[AbiType::Uint(16)], &data).plausible);
    }

    #[test]
    fn truncated_data_reports_partial_coverage() {
        let data = encode_args(&[AbiValue::Address(addr(1)), AbiValue::Uint(U256::one())]);
        let d = decode_args(&[AbiType::Address, AbiType::Uint(256)], &data[..40]);
        assert_eq!(d.values, Err(DecodeError::OutOfBounds(32)));
        assert_eq!(d.covered, 32);
    }

    #[test]
    fn hostile_length_is_rejected() {
        let mut data = uint_word(U256::from(32)).to_vec();
        data.extend_from_slice(&uint_word(U256::MAX));
        let d = decode_args(&[AbiType::Bytes], &data);
        assert_eq!(d.values, Err(DecodeError::BadOffset));
    }
}
