//! Checkpoint files.
//!
//! | bytes          | content                                          |
//! |----------------|--------------------------------------------------|
//! | 0..4           | magic `OADC`                                     |
//! | 4..8           | header length `H`, `u32` LE                      |
//! | 8..8+H         | header, UTF-8 JSON                               |
//! | 8+H..end-4     | parameter payload, `f32` LE, manifest order      |
//! | end-4..end     | CRC32 (IEEE) of the payload, `u32` LE            |
//!
//! The header holds the format version, the run config the model was built
//! from, and a manifest of `{name, shape, offset}` with byte offsets into the
//! payload.

use std::path::Path;

use oad_core::model::Model;
use oad_core::{ParamStore, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"OADC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub params: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn from_model(config: &RunConfig, model: &Model<f32>) -> Self {
        Checkpoint {
            config: config.clone(),
            params: model.params.clone(),
        }
    }

    /// Rebuilds the model the checkpoint describes.
    pub fn model(&self) -> Result<Model<f32>> {
        Model::from_params(self.config.model.to_core(), self.params.clone())
            .map_err(|e| CliError::Checkpoint(format!("parameters do not fit the stored config: {e}")))
    }
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let mut params = Vec::new();
    let mut payload = Vec::new();
    for p in ck.params.iter() {
        params.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: payload.len(),
        });
        for v in p.value.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: ck.config.to_json(),
        params,
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| CliError::Checkpoint(m);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(bad("missing `OADC` magic".into()));
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let payload_start = 8usize
        .checked_add(header_len)
        .filter(|&s| s + 4 <= bytes.len())
        .ok_or_else(|| bad(format!("header length {header_len} exceeds file size {}", bytes.len())))?;
    let header: Header =
        serde_json::from_slice(&bytes[8..payload_start]).map_err(|e| bad(format!("unreadable header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {}, expected {FORMAT_VERSION}",
            header.format_version
        )));
    }
    let payload = &bytes[payload_start..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(bad(format!("CRC mismatch: stored {stored:08x}, payload hashes to {actual:08x}")));
    }

    let mut params = ParamStore::new();
    let mut expected_offset = 0usize;
    for e in &header.params {
        if e.offset != expected_offset {
            return Err(bad(format!(
                "manifest entry `{}` at byte {} but the previous entry ends at {expected_offset}",
                e.name, e.offset
            )));
        }
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * 4;
        if end > payload.len() {
            return Err(bad(format!("parameter `{}` runs past the payload", e.name)));
        }
        let data = payload[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let value = Tensor::new(e.shape.clone(), data).map_err(|err| bad(format!("parameter `{}`: {err}", e.name)))?;
        params
            .add(e.name.clone(), value)
            .map_err(|err| bad(format!("parameter `{}`: {err}", e.name)))?;
        expected_offset = end;
    }
    if expected_offset != payload.len() {
        return Err(bad(format!(
            "manifest covers {expected_offset} bytes of a {}-byte payload",
            payload.len()
        )));
    }
    let config: RunConfig =
        serde_json::from_value(header.config).map_err(|e| bad(format!("stored config is invalid: {e}")))?;
    Ok(Checkpoint { config, params })
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ck)).map_err(CliError::io(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    decode(&bytes).map_err(|e| match e {
        CliError::Checkpoint(m) => CliError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
