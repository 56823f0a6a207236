//! Binary checkpoint: magic, format version, JSON header, raw f64 payload.
//!
//! ```text
//! b"BGTCKPT\0" | u32 LE version | u64 LE header length | header JSON | f64 LE payload
//! ```
//!
//! The header holds the model config, the vocabulary and one
//! `{name, shape, offset, len}` entry per tensor (offsets in f64 units).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use super::vocab::Vocab;
use super::Model;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 8] = b"BGTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

pub fn to_bytes(model: &Model) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for (name, t) in model.params.named() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset,
            len: t.len(),
        });
        offset += t.len();
    }
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        tensors,
    })?;
    let mut out = Vec::with_capacity(20 + header.len() + offset * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(Error::Checkpoint(format!("truncated {what}")));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn from_bytes(mut bytes: &[u8]) -> Result<Model> {
    if take(&mut bytes, 8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len).map_err(|_| Error::Checkpoint("header too large".into()))?;
    let header: Header = serde_json::from_slice(take(&mut bytes, header_len, "header")?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    header.config.validate()?;
    if header.config.encoder.vocab_size != header.vocab.len() {
        return Err(Error::Checkpoint("vocab_size disagrees with the stored vocabulary".into()));
    }
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Checkpoint("payload is not a whole number of f64 values".into()));
    }
    let payload: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();

    let skeleton = ModelParams::init(&header.config, 0)?;
    let expected = skeleton.named();
    if expected.len() != header.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            expected.len(),
            header.tensors.len()
        )));
    }
    let mut loaded = Vec::with_capacity(expected.len());
    let mut cursor = 0;
    for ((name, like), entry) in expected.iter().zip(&header.tensors) {
        if &entry.name != name || entry.shape != like.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {} {:?} does not match expected {name} {:?}",
                entry.name,
                entry.shape,
                like.shape()
            )));
        }
        if entry.offset != cursor || entry.len != like.len() || cursor + entry.len > payload.len() {
            return Err(Error::Checkpoint(format!("bad offset or length for {name}")));
        }
        loaded.push(Tensor::new(entry.shape.clone(), payload[cursor..cursor + entry.len].to_vec())?);
        cursor += entry.len;
    }
    if cursor != payload.len() {
        return Err(Error::Checkpoint("trailing payload".into()));
    }
    Ok(Model {
        params: skeleton.rebuild(loaded),
        config: header.config,
        vocab: header.vocab,
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
