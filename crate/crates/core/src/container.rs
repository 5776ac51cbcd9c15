//! Flat binary container for tensors, adjacency series and checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! 8 bytes   magic  "GGCNBIN\0"
//! u32       format version
//! u64       header length in bytes
//! ...       UTF-8 JSON header {"kind", "shape", "meta"}
//! ...       f64 payload, product(shape) values, row-major
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"GGCNBIN\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a container file (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    Version(u32),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("payload has {found} values, shape requires {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("expected container kind `{expected}`, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("metadata field `{0}` missing or invalid")]
    Meta(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub shape: Vec<usize>,
    #[serde(default)]
    pub meta: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Header,
    pub data: Vec<f64>,
}

impl Container {
    pub fn new(kind: impl Into<String>, shape: Vec<usize>, meta: Value, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { header: Header { kind: kind.into(), shape, meta }, data }
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), ContainerError> {
        if self.header.kind == kind {
            Ok(())
        } else {
            Err(ContainerError::Kind { expected: kind.to_string(), found: self.header.kind.clone() })
        }
    }

    /// Typed access to a metadata field.
    pub fn meta<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, ContainerError> {
        let v = self.header.meta.get(key).ok_or_else(|| ContainerError::Meta(key.to_string()))?;
        serde_json::from_value(v.clone()).map_err(|_| ContainerError::Meta(key.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ContainerError> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContainerError> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ContainerError::BadMagic);
        }
        let mut u32b = [0u8; 4];
        r.read_exact(&mut u32b)?;
        let version = u32::from_le_bytes(u32b);
        if version != FORMAT_VERSION {
            return Err(ContainerError::Version(version));
        }
        let mut u64b = [0u8; 8];
        r.read_exact(&mut u64b)?;
        let header_len = u64::from_le_bytes(u64b) as usize;
        if header_len > r.len() {
            return Err(ContainerError::Io(io::Error::new(io::ErrorKind::UnexpectedEof, "truncated header")));
        }
        let header: Header = serde_json::from_slice(&r[..header_len])?;
        r = &r[header_len..];
        let expected: usize = header.shape.iter().product();
        if r.len() != expected * 8 {
            return Err(ContainerError::PayloadLength { expected, found: r.len() / 8 });
        }
        let data = r.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Self { header, data })
    }

    pub fn write(&self, path: &Path) -> Result<(), ContainerError> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, ContainerError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
