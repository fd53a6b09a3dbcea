//! Canonical parameter images and salted SHA-256 locks.
//!
//! Byte layout of an image, all integers `u64` little-endian:
//!
//! ```text
//! b"HPI1" count { name_len name_bytes rank dim_0 .. dim_{rank-1} values(f64 LE) }*
//! ```
//!
//! Parameters appear in lexicographic byte order of their names.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_TAG: [u8; 4] = *b"HPI1";
pub const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamImage {
    params: BTreeMap<String, Tensor>,
}

impl ParamImage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Result<()> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter `{name}` has shape {shape:?} but {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter image"));
        }
        if self.params.contains_key(&name) {
            return Err(Error::DuplicateName(name));
        }
        self.params.insert(
            name,
            Tensor {
                shape: shape.to_vec(),
                values,
            },
        );
        Ok(())
    }

    pub fn from_params<I, S>(params: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<usize>, Vec<f64>)>,
        S: Into<String>,
    {
        let mut img = Self::new();
        for (name, shape, values) in params {
            img.insert(name, &shape, values)?;
        }
        Ok(img)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    /// Parameters in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&FORMAT_TAG);
        put_u64(&mut out, self.params.len());
        for (name, t) in &self.params {
            put_u64(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u64(&mut out, t.shape.len());
            for &d in &t.shape {
                put_u64(&mut out, d);
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Strict inverse of [`to_bytes`](Self::to_bytes): names must arrive in
    /// canonical order and no trailing bytes are allowed.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != FORMAT_TAG {
            return Err(Error::MalformedImage("unknown format tag".into()));
        }
        let count = r.u64()?;
        let mut img = Self::new();
        let mut prev: Option<String> = None;
        for _ in 0..count {
            let len = r.u64()?;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::MalformedImage("name is not UTF-8".into()))?;
            if prev.as_ref().is_some_and(|p| p.as_str() >= name.as_str()) {
                return Err(Error::MalformedImage(format!("`{name}` out of canonical order")));
            }
            let rank = r.u64()?;
            let mut shape = Vec::new();
            for _ in 0..rank {
                shape.push(r.u64()?);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| Error::MalformedImage(format!("shape {shape:?} exceeds input")))?;
            let values = r
                .take(n * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            img.insert(name.clone(), &shape, values)?;
            prev = Some(name);
        }
        if r.remaining() != 0 {
            return Err(Error::MalformedImage(format!("{} trailing bytes", r.remaining())));
        }
        Ok(img)
    }
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::MalformedImage("unexpected end of input".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::MalformedImage(format!("length {v} overflows")))
    }
}

/// `SHA-256(bytes ‖ salt)`.
pub fn digest_bytes(bytes: &[u8], salt: &[u8]) -> [u8; DIGEST_LEN] {
    let mut h = Sha256::new();
    h.update(bytes);
    h.update(salt);
    h.finalize().into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockRecord {
    pub format: [u8; 4],
    pub digest: [u8; DIGEST_LEN],
    pub salt: Vec<u8>,
    /// Unix seconds; not part of the digest.
    pub created_at: u64,
}

#[derive(Serialize, Deserialize)]
struct LockFile {
    format: String,
    digest: String,
    salt: String,
    created_at: u64,
}

impl LockRecord {
    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LockFile {
            format: String::from_utf8_lossy(&self.format).into_owned(),
            digest: self.digest_hex(),
            salt: BASE64.encode(&self.salt),
            created_at: self.created_at,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: LockFile = serde_json::from_str(s)?;
        let format: [u8; 4] = file
            .format
            .as_bytes()
            .try_into()
            .map_err(|_| Error::InvalidArgument(format!("bad format tag `{}`", file.format)))?;
        let digest: [u8; DIGEST_LEN] = hex::decode(&file.digest)
            .ok()
            .and_then(|d| d.try_into().ok())
            .ok_or_else(|| Error::InvalidArgument("digest must be 32 bytes of hex".into()))?;
        let salt = BASE64
            .decode(&file.salt)
            .map_err(|e| Error::InvalidArgument(format!("salt: {e}")))?;
        Ok(Self {
            format,
            digest,
            salt,
            created_at: file.created_at,
        })
    }
}

pub fn lock(image: &ParamImage, salt: &[u8]) -> LockRecord {
    let created_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    LockRecord {
        format: FORMAT_TAG,
        digest: digest_bytes(&image.to_bytes(), salt),
        salt: salt.to_vec(),
        created_at,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verification {
    Verified,
    Violation { expected: String, found: String },
}

impl Verification {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verification::Verified)
    }
}

/// Compares without early exit so timing does not depend on the position of
/// the first differing byte.
pub fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let diff = a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y));
    std::hint::black_box(diff) == 0
}

pub fn verify_digest(bytes: &[u8], salt: &[u8], record: &LockRecord) -> Verification {
    let found = digest_bytes(bytes, salt);
    if record.format == FORMAT_TAG && constant_time_eq(&found, &record.digest) {
        Verification::Verified
    } else {
        Verification::Violation {
            expected: record.digest_hex(),
            found: hex::encode(found),
        }
    }
}

pub fn verify_lock(image: &ParamImage, salt: &[u8], record: &LockRecord) -> Verification {
    verify_digest(&image.to_bytes(), salt, record)
}
