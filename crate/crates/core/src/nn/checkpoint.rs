//! Model checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                              |
//! |--------------|------------------------------------------------------|
//! | 0..8         | magic `ALFMLP\0\0`                                   |
//! | 8..12        | format version (u32, currently 1)                    |
//! | 12..16       | header length `H` (u32)                              |
//! | 16..16+H     | UTF-8 JSON [`Header`]                                |
//! | 16+H..       | tensors in header order, each `rows * cols` f64 LE   |
//!
//! Matrices are stored column-major. Tensor order is the trainable tensors
//! (`dense1.w`, `dense1.b`, `bn1.gamma`, `bn1.beta`, `dense2.w`, ...,
//! `dense3.b`) followed by the batch-norm running statistics
//! (`bn1.running_mean`, `bn1.running_var`, `bn2.running_mean`,
//! `bn2.running_var`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{MlpModel, STAT_NAMES, TENSOR_NAMES};
use super::train::TrainConfig;
use crate::frontend::FeatureKind;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ALFMLP\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub tensors: Vec<TensorInfo>,
    #[serde(flatten)]
    pub meta: Metadata,
}

/// Provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Metadata {
    pub train_config: Option<TrainConfig>,
    /// Input representation the model was trained on.
    pub frontend: Option<FeatureKind>,
    pub final_loss: Option<f64>,
}

fn shapes(model: &MlpModel) -> Vec<TensorInfo> {
    let (h, i) = (model.hidden(), model.inputs());
    let o = model.dense3.w.nrows();
    let dims = [(h, i), (h, 1), (h, 1), (h, 1), (h, h), (h, 1), (h, 1), (h, 1), (o, h), (o, 1)];
    TENSOR_NAMES
        .iter()
        .zip(dims)
        .chain(STAT_NAMES.iter().zip([(h, 1); 4]))
        .map(|(name, (rows, cols))| TensorInfo {
            name: name.to_string(),
            rows,
            cols,
        })
        .collect()
}

pub fn encode(model: &MlpModel, meta: &Metadata) -> Vec<u8> {
    let header = Header {
        inputs: model.inputs(),
        hidden: model.hidden(),
        outputs: model.dense3.w.nrows(),
        tensors: shapes(model),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * model.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in model.tensors().iter().chain(model.stats().iter()) {
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<(MlpModel, Metadata)> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(format_err(0, "not a model checkpoint"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(format_err(8, format!("unsupported checkpoint version {version}")));
    }
    let hlen = u32_at(12) as usize;
    let body = 16 + hlen;
    if bytes.len() < body {
        return Err(format_err(12, "header length exceeds file"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..body])
        .map_err(|e| format_err(16 + e.column().saturating_sub(1), e.to_string()))?;

    let mut model = MlpModel::zeros(header.inputs, header.hidden);
    let expected = shapes(&model);
    if header.outputs != model.dense3.w.nrows() || header.tensors != expected {
        return Err(format_err(16, "tensor table does not match the architecture"));
    }
    let total: usize = expected.iter().map(|t| t.rows * t.cols).sum();
    if bytes.len() != body + 8 * total {
        return Err(format_err(
            body,
            format!("expected {} data bytes, found {}", 8 * total, bytes.len() - body),
        ));
    }
    let mut pos = body;
    let mut fill = |dst: &mut [f64]| {
        for v in dst.iter_mut() {
            *v = f64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
            pos += 8;
        }
    };
    for t in model.tensors_mut() {
        fill(t);
    }
    for t in model.stats_mut() {
        fill(t);
    }
    Ok((model, header.meta))
}

pub fn save(path: &Path, model: &MlpModel, meta: &Metadata) -> Result<()> {
    std::fs::write(path, encode(model, meta)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(MlpModel, Metadata)> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = MlpModel::new(12, 5, 4);
        m.bn1.running_var[2] = 0.123_456_789_012_345_6;
        m.bn2.running_mean[0] = -1e-300;
        let meta = Metadata {
            train_config: Some(TrainConfig {
                seed: 99,
                ..TrainConfig::default()
            }),
            frontend: Some(FeatureKind::Gsd),
            final_loss: Some(0.25),
        };
        let (back, c) = decode(&encode(&m, &meta)).unwrap();
        assert_eq!(back, m);
        assert_eq!(c, meta);
        for (a, b) in back.tensors().iter().zip(m.tensors()) {
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = encode(&MlpModel::new(3, 2, 0), &Metadata::default());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Format { offset: 0, .. })));
        let mut ver = bytes;
        ver[8] = 7;
        assert!(matches!(decode(&ver), Err(Error::Format { offset: 8, .. })));
    }
}
