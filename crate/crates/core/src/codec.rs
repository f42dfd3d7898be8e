//! Canonical binary encoding used for hashing, signing, block files and
//! chaincode values.
//!
//! Every variable-length field is a 4-byte big-endian length followed by the
//! raw bytes. Integers (including list counts and enum tags) are 8-byte
//! big-endian. Fields appear in declaration order with no padding or names.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input (wanted {wanted} bytes, {remaining} left)")]
    UnexpectedEof { wanted: usize, remaining: usize },
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid tag {tag} for {what}")]
    BadTag { what: &'static str, tag: u64 },
    #[error("invalid utf-8 in string field")]
    Utf8,
    #[error("invalid field: {0}")]
    Invalid(String),
}

/// 32-byte SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash256(pub [u8; 32]);

impl Hash256 {
    pub const ZERO: Hash256 = Hash256([0u8; 32]);

    pub fn digest(bytes: &[u8]) -> Self {
        Hash256(Sha256::digest(bytes).into())
    }

    pub fn of<T: Canonical>(value: &T) -> Self {
        Self::digest(&value.to_canonical())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CodecError> {
        let raw = hex::decode(s).map_err(|e| CodecError::Invalid(format!("hash hex: {e}")))?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| CodecError::Invalid("hash must be 32 bytes".into()))?;
        Ok(Hash256(arr))
    }

    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }
}

impl fmt::Debug for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash256({})", self.short())
    }
}

impl fmt::Display for Hash256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash256 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash256 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Hash256::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Default, Debug)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        let len = u32::try_from(b.len()).expect("field larger than 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u64(v as u64)
    }

    pub fn value<T: Canonical>(&mut self, v: &T) -> &mut Self {
        v.encode_to(self);
        self
    }

    pub fn list<T: Canonical>(&mut self, items: &[T]) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            item.encode_to(self);
        }
        self
    }

    pub fn byte_list(&mut self, items: &[Vec<u8>]) -> &mut Self {
        self.u64(items.len() as u64);
        for item in items {
            self.bytes(item);
        }
        self
    }

    pub fn option<T: Canonical>(&mut self, v: Option<&T>) -> &mut Self {
        match v {
            None => self.u64(0),
            Some(v) => self.u64(1).value(v),
        }
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Decoder<'a> {
    input: &'a [u8],
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Self { input }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.input.len() < n {
            return Err(CodecError::UnexpectedEof {
                wanted: n,
                remaining: self.input.len(),
            });
        }
        let (head, tail) = self.input.split_at(n);
        self.input = tail;
        Ok(head)
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let raw = self.take(8)?;
        Ok(u64::from_be_bytes(raw.try_into().unwrap()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let raw = self.take(4)?;
        let len = u32::from_be_bytes(raw.try_into().unwrap()) as usize;
        self.take(len)
    }

    pub fn byte_vec(&mut self) -> Result<Vec<u8>, CodecError> {
        self.bytes().map(<[u8]>::to_vec)
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.byte_vec()?).map_err(|_| CodecError::Utf8)
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u64()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::BadTag { what: "bool", tag }),
        }
    }

    pub fn value<T: Canonical>(&mut self) -> Result<T, CodecError> {
        T::decode_from(self)
    }

    fn count(&mut self) -> Result<usize, CodecError> {
        let n = self.u64()?;
        // Each element takes at least 4 bytes, so a larger count is corrupt.
        if n > (self.input.len() as u64) / 4 + 1 {
            return Err(CodecError::Invalid(format!("list count {n} exceeds input")));
        }
        Ok(n as usize)
    }

    pub fn list<T: Canonical>(&mut self) -> Result<Vec<T>, CodecError> {
        let n = self.count()?;
        (0..n).map(|_| T::decode_from(self)).collect()
    }

    pub fn byte_list(&mut self) -> Result<Vec<Vec<u8>>, CodecError> {
        let n = self.count()?;
        (0..n).map(|_| self.byte_vec()).collect()
    }

    pub fn option<T: Canonical>(&mut self) -> Result<Option<T>, CodecError> {
        match self.u64()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode_from(self)?)),
            tag => Err(CodecError::BadTag { what: "option", tag }),
        }
    }

    pub fn remaining(&self) -> usize {
        self.input.len()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.input.len() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }
}

pub trait Canonical: Sized {
    fn encode_to(&self, enc: &mut Encoder);
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError>;

    fn to_canonical(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode_to(&mut enc);
        enc.finish()
    }

    fn from_canonical(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(bytes);
        let v = Self::decode_from(&mut dec)?;
        dec.finish()?;
        Ok(v)
    }
}

impl Canonical for u64 {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(*self);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.u64()
    }
}

impl Canonical for String {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.str(self);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.string()
    }
}

impl Canonical for Hash256 {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let raw = dec.bytes()?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| CodecError::Invalid(format!("hash of {} bytes", raw.len())))?;
        Ok(Hash256(arr))
    }
}

impl<A: Canonical, B: Canonical> Canonical for (A, B) {
    fn encode_to(&self, enc: &mut Encoder) {
        self.0.encode_to(enc);
        self.1.encode_to(enc);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok((A::decode_from(dec)?, B::decode_from(dec)?))
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.list(self);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.list()
    }
}
