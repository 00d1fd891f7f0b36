//! Versioned binary container for named tensors.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "OTEQ"  u32 version  u32 meta_len  meta (JSON, UTF-8)
//! u32 count, then per tensor:
//!     u32 name_len  name  u32 ndim  u64 dims[ndim]  f64 values[prod(dims)]
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::grad::Tensor;

pub const MAGIC: &[u8; 4] = b"OTEQ";
pub const FORMAT_VERSION: u32 = 1;

/// JSON metadata plus an ordered list of named tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(metadata: serde_json::Value) -> Self {
        Self {
            metadata,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.push((name.into(), tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Like [`get`](Self::get) but a missing name is a format error.
    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Format {
            offset: 0,
            message: format!("missing tensor `{name}`"),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = self.metadata.to_string();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(format_err(0, format!("bad magic {magic:?}")));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format_err(
                4,
                format!("checkpoint version {version}, this build reads version {FORMAT_VERSION}"),
            ));
        }
        let meta_len = r.u32()? as usize;
        let meta_at = r.pos;
        let metadata = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| format_err(meta_at as u64, format!("metadata: {e}")))?;
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name_at = r.pos;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| format_err(name_at as u64, "tensor name is not UTF-8"))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let data_at = r.pos;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| format_err(data_at as u64, format!("tensor `{name}` shape {shape:?} exceeds file")))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let tensor = Tensor::new(shape, data).map_err(|e| format_err(data_at as u64, format!("`{name}`: {e}")))?;
            tensors.push((name, tensor));
        }
        if r.remaining() != 0 {
            return Err(format_err(r.pos as u64, format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { metadata, tensors })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
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
            return Err(format_err(
                self.pos as u64,
                format!("unexpected end of file: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
