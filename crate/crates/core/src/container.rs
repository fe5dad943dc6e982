//! Tensor container shared by model and ridge checkpoints.
//!
//! Layout: a 5-byte magic string, the manifest length as a little-endian
//! `u64`, the manifest as UTF-8 JSON, then the raw little-endian scalar data.
//! Manifest offsets are relative to the start of the data section.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub nbytes: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// In-memory form of a container file.
#[derive(Clone, Debug, Default)]
pub struct Container {
    pub meta: serde_json::Value,
    entries: Vec<TensorEntry>,
    data: Vec<u8>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            entries: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn push<S: Scalar>(&mut self, name: &str, tensor: &Tensor<S>) {
        let offset = self.data.len() as u64;
        for &v in tensor.data() {
            v.write_le(&mut self.data);
        }
        self.entries.push(TensorEntry {
            name: name.to_string(),
            shape: tensor.shape().to_vec(),
            dtype: S::DTYPE.to_string(),
            offset,
            nbytes: self.data.len() as u64 - offset,
        });
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn get<S: Scalar>(&self, name: &str) -> Result<Tensor<S>> {
        let e = self
            .entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::data(format!("checkpoint has no tensor named {name}")))?;
        if e.dtype != S::DTYPE {
            return Err(Error::data(format!(
                "{name}: stored as {}, requested {}",
                e.dtype,
                S::DTYPE
            )));
        }
        let n: usize = e.shape.iter().product();
        if e.nbytes as usize != n * S::BYTES {
            return Err(Error::data(format!(
                "{name}: {} bytes recorded for shape {:?}",
                e.nbytes, e.shape
            )));
        }
        let start = e.offset as usize;
        let bytes = self
            .data
            .get(start..start + e.nbytes as usize)
            .ok_or_else(|| Error::data(format!("{name}: data section truncated")))?;
        let data = bytes.chunks_exact(S::BYTES).map(S::read_le).collect();
        Tensor::new(e.shape.clone(), data)
    }

    pub fn to_bytes(&self, magic: &[u8; 5]) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&Manifest {
            meta: self.meta.clone(),
            tensors: self.entries.clone(),
        })?;
        let mut out = Vec::with_capacity(13 + manifest.len() + self.data.len());
        out.extend_from_slice(magic);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&self.data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], magic: &[u8; 5]) -> Result<Self> {
        if bytes.len() < 13 || &bytes[..5] != magic {
            return Err(Error::data(format!(
                "not a {} file (bad magic)",
                String::from_utf8_lossy(magic)
            )));
        }
        let len = u64::from_le_bytes(bytes[5..13].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(13..13 + len)
            .ok_or_else(|| Error::data("manifest truncated"))?;
        let manifest: Manifest = serde_json::from_slice(body)?;
        let data = bytes[13 + len..].to_vec();
        let expected: u64 = manifest.tensors.iter().map(|e| e.nbytes).sum();
        if expected != data.len() as u64 {
            return Err(Error::data(format!(
                "data section holds {} bytes, manifest describes {expected}",
                data.len()
            )));
        }
        Ok(Self {
            meta: manifest.meta,
            entries: manifest.tensors,
            data,
        })
    }

    pub fn write(&self, path: &Path, magic: &[u8; 5]) -> Result<()> {
        fs::write(path, self.to_bytes(magic)?)?;
        Ok(())
    }

    pub fn read(path: &Path, magic: &[u8; 5]) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes, magic)
    }
}
