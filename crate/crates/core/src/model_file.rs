//! Versioned JSON envelope for trained models.
//!
//! Parameters are stored as named blocks of little-endian `f64` values,
//! base64 encoded, so a save/load cycle is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Knn,
    Rf,
    Svm,
    Cnn,
    Lstm,
    Cnnlstm,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Rf => "rf",
            ModelKind::Svm => "svm",
            ModelKind::Cnn => "cnn",
            ModelKind::Lstm => "lstm",
            ModelKind::Cnnlstm => "cnnlstm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamBlock {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        ParamBlock {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        ParamBlock::new(name, vec![1], vec![v])
    }

    pub fn from_usizes(name: impl Into<String>, values: &[usize]) -> Self {
        ParamBlock::new(
            name,
            vec![values.len()],
            values.iter().map(|v| *v as f64).collect(),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RawBlock {
    name: String,
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct RawEnvelope {
    format_version: u32,
    kind: String,
    schema: String,
    #[serde(default)]
    metadata: BTreeMap<String, serde_json::Value>,
    params: Vec<RawBlock>,
}

/// A decoded model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub schema: String,
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub params: Vec<ParamBlock>,
}

impl ModelFile {
    pub fn new(kind: ModelKind, schema: impl Into<String>) -> Self {
        ModelFile {
            kind,
            schema: schema.into(),
            metadata: BTreeMap::new(),
            params: Vec::new(),
        }
    }

    pub fn push(&mut self, block: ParamBlock) {
        self.params.push(block);
    }

    pub fn block(&self, name: &str) -> Result<&ParamBlock> {
        self.params
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::Model(format!("missing parameter block {name:?}")))
    }

    /// Block data, checked against an expected shape.
    pub fn data(&self, name: &str, shape: &[usize]) -> Result<&[f64]> {
        let b = self.block(name)?;
        if b.shape != shape {
            return Err(Error::Model(format!(
                "block {name:?} has shape {:?}, expected {shape:?}",
                b.shape
            )));
        }
        Ok(&b.data)
    }

    pub fn usizes(&self, name: &str) -> Result<Vec<usize>> {
        self.block(name)?
            .data
            .iter()
            .map(|v| {
                if *v >= 0.0 && v.fract() == 0.0 {
                    Ok(*v as usize)
                } else {
                    Err(Error::Model(format!("block {name:?} holds non-index {v}")))
                }
            })
            .collect()
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        Ok(self.data(name, &[1])?[0])
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.metadata
            .get(key)
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::Model(format!("missing integer metadata {key:?}")))
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.metadata
            .get(key)
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Model(format!("missing string metadata {key:?}")))
    }

    pub fn encode(&self) -> Result<String> {
        let raw = RawEnvelope {
            format_version: FORMAT_VERSION,
            kind: self.kind.tag().to_string(),
            schema: self.schema.clone(),
            metadata: self.metadata.clone(),
            params: self
                .params
                .iter()
                .map(|b| {
                    let mut bytes = Vec::with_capacity(b.data.len() * 8);
                    for v in &b.data {
                        bytes.extend_from_slice(&v.to_le_bytes());
                    }
                    RawBlock {
                        name: b.name.clone(),
                        shape: b.shape.clone(),
                        data: STANDARD.encode(bytes),
                    }
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&raw)?)
    }

    pub fn decode(text: &str) -> Result<Self> {
        let raw: RawEnvelope =
            serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        if raw.format_version != FORMAT_VERSION {
            return Err(Error::ModelVersion {
                found: raw.format_version,
                supported: FORMAT_VERSION,
            });
        }
        let kind: ModelKind = serde_json::from_value(serde_json::Value::String(raw.kind.clone()))
            .map_err(|_| Error::Model(format!("unknown model kind {:?}", raw.kind)))?;
        let mut params = Vec::with_capacity(raw.params.len());
        for b in raw.params {
            let bytes = STANDARD
                .decode(b.data.as_bytes())
                .map_err(|e| Error::Model(format!("block {:?}: {e}", b.name)))?;
            let expected: usize = b.shape.iter().product();
            if bytes.len() != expected * 8 {
                return Err(Error::Model(format!(
                    "block {:?}: {} bytes for shape {:?}",
                    b.name,
                    bytes.len(),
                    b.shape
                )));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push(ParamBlock {
                name: b.name,
                shape: b.shape,
                data,
            });
        }
        Ok(ModelFile {
            kind,
            schema: raw.schema,
            metadata: raw.metadata,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelFile::decode(&fs::read_to_string(path)?)
    }
}

/// Hex SHA-256 of a byte string; used for model and dataset hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
