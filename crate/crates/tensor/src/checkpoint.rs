//! Checkpoint container.
//!
//! Layout:
//!
//! ```text
//! GEFCKPT1\n
//! <header length in bytes, decimal>\n
//! <header: JSON {"manifest": …, "tensors": [{name, shape, offset, len}, …]}>
//! <payload: little-endian f64 values, tensors back to back in header order>
//! ```
//!
//! `offset` is a byte offset into the payload. Values round-trip bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::{ParamStore, Tensor};

const MAGIC: &[u8] = b"GEFCKPT1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    manifest: serde_json::Value,
    tensors: Vec<Entry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub manifest: serde_json::Value,
    tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(manifest: serde_json::Value) -> Self {
        Self {
            manifest,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(TensorError::Format(format!("duplicate tensor {name}")));
        }
        self.tensors.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Store every parameter of `store` under `prefix`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) -> Result<()> {
        for (_, p) in store.iter() {
            let mut t = Tensor::new(p.tensor.shape(), p.tensor.data().to_vec())?;
            t.requires_grad = false;
            self.push(format!("{prefix}{}", p.name), t)?;
        }
        Ok(())
    }

    /// Overwrite the values of every parameter in `store` from tensors
    /// stored under `prefix`.
    pub fn restore_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in ids {
            let key = format!("{prefix}{name}");
            let src = self
                .get(&key)
                .ok_or_else(|| TensorError::Format(format!("missing tensor {key}")))?;
            let dst = store.get_mut(id);
            if src.shape() != dst.shape() {
                return Err(TensorError::Format(format!(
                    "{key}: stored shape {:?}, expected {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.data_mut().copy_from_slice(src.data());
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let entries: Vec<Entry> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    len: t.numel(),
                };
                offset += t.numel() * 8;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            manifest: self.manifest.clone(),
            tensors: entries,
        })
        .map_err(|e| TensorError::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(MAGIC.len() + 24 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(format!("{}\n", header.len()).as_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| TensorError::Format("bad magic".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| TensorError::Format("missing header length".into()))?;
        let header_len: usize = std::str::from_utf8(&rest[..nl])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TensorError::Format("bad header length".into()))?;
        let rest = &rest[nl + 1..];
        if rest.len() < header_len {
            return Err(TensorError::Format("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| TensorError::Format(format!("header: {e}")))?;
        let payload = &rest[header_len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let end = e.offset + e.len * 8;
            if end > payload.len() {
                return Err(TensorError::Format(format!("{}: payload truncated", e.name)));
            }
            let data = payload[e.offset..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((e.name, Tensor::new(&e.shape, data)?));
        }
        Ok(Self {
            manifest: header.manifest,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
