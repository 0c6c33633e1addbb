//! Single-file model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! u64         header length H in bytes
//! H bytes     UTF-8 JSON header
//! payload     IEEE-754 binary32 values, tensors back to back
//! ```
//!
//! The header is
//! `{"format":"modgate-model","version":1,"config":{..},"tensors":[{"name","shape","offset","dtype":"f32"}..]}`
//! with `offset` in bytes from the start of the payload and tensors listed in
//! parameter-store order. Values are stored as 32-bit floats; loading widens
//! them back to 64 bits, so save → load → save is byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

pub const FORMAT: &str = "modgate-model";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(model.params().len());
    let mut payload = Vec::new();
    for (name, v) in model.params().iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: v.shape(),
            offset: payload.len(),
            dtype: "f32".into(),
        });
        for &x in v.data().data() {
            payload.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        config: model.config().clone(),
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::ModelFile(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let bad = |msg: String| Error::ModelFile(msg);
    if bytes.len() < 8 {
        return Err(bad("file shorter than the header length prefix".into()));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    let header_end = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad(format!("header length {header_len} exceeds file size")))?;
    let header: Header = serde_json::from_slice(&bytes[8..header_end]).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
    }
    let payload = &bytes[header_end..];
    let mut store = ParamStore::new();
    let mut expected_end = 0;
    for t in &header.tensors {
        if t.dtype != "f32" {
            return Err(bad(format!("tensor {}: unsupported dtype {}", t.name, t.dtype)));
        }
        let n: usize = t.shape.iter().product();
        let end = t.offset + 4 * n;
        if end > payload.len() {
            return Err(bad(format!("tensor {} runs past the payload", t.name)));
        }
        let data = payload[t.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        store
            .insert(t.name.clone(), Tensor::new(&t.shape, data)?)
            .map_err(|_| bad(format!("tensor {} listed twice", t.name)))?;
        expected_end = expected_end.max(end);
    }
    if expected_end != payload.len() {
        return Err(bad(format!(
            "payload has {} bytes, tensors cover {expected_end}",
            payload.len()
        )));
    }
    Model::from_store(header.config, store)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode(model)?;
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.sync_all()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    decode(&fs::read(path)?)
}
