//! `TGM1` model container shared by f32 and 4-bit models.
//!
//! Layout: the magic `TGM1`, a little-endian u64 header length, the JSON
//! header, then the tensor payloads back to back. Offsets in the header are
//! relative to the first payload byte. f32 tensors are little-endian floats;
//! q4 tensors are packed nibbles followed by their f32 scale.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfg::Vocabulary;
use crate::gnn::{GnnConfig, GnnError, GnnModel, Tensor};
use crate::quant::{dequantize, QuantError, QuantizedModel, QuantizedTensor};

pub const MAGIC: &[u8; 4] = b"TGM1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a TGM1 checkpoint")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    Q4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: DType,
    pub offset: usize,
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: GnnConfig,
    pub input_dim: usize,
    pub vocab: Vocabulary,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Tensor<f32>),
    Q4(QuantizedTensor),
}

impl TensorData {
    fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::Q4(_) => DType::Q4,
        }
    }

    fn shape(&self) -> &[usize] {
        match self {
            TensorData::F32(t) => t.shape(),
            TensorData::Q4(q) => &q.shape,
        }
    }

    fn encode(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::F32(t) => {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            TensorData::Q4(q) => {
                out.extend_from_slice(&q.packed);
                out.extend_from_slice(&q.scale.to_le_bytes());
            }
        }
    }

    pub fn to_f32(&self) -> Tensor<f32> {
        match self {
            TensorData::F32(t) => t.clone(),
            TensorData::Q4(q) => dequantize(q),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: GnnConfig,
    pub input_dim: usize,
    pub vocab: Vocabulary,
    pub tensors: Vec<(String, TensorData)>,
}

impl Checkpoint {
    pub fn from_model(model: &GnnModel<f32>, vocab: &Vocabulary) -> Self {
        Checkpoint {
            config: model.config.clone(),
            input_dim: model.input_dim,
            vocab: vocab.clone(),
            tensors: model
                .params()
                .into_iter()
                .map(|(n, t)| (n, TensorData::F32(t.clone())))
                .collect(),
        }
    }

    pub fn from_quantized(model: &QuantizedModel, vocab: &Vocabulary) -> Self {
        Checkpoint {
            config: model.config.clone(),
            input_dim: model.input_dim,
            vocab: vocab.clone(),
            tensors: model
                .tensors
                .iter()
                .map(|(n, q)| (n.clone(), TensorData::Q4(q.clone())))
                .collect(),
        }
    }

    pub fn is_quantized(&self) -> bool {
        !self.tensors.is_empty() && self.tensors.iter().all(|(_, t)| matches!(t, TensorData::Q4(_)))
    }

    /// Bytes of tensor payload, headers excluded.
    pub fn payload_bytes(&self) -> usize {
        self.tensors
            .iter()
            .map(|(_, t)| match t {
                TensorData::F32(t) => 4 * t.len(),
                TensorData::Q4(q) => q.payload_bytes(),
            })
            .sum()
    }

    /// The network as f32, dequantizing q4 tensors.
    pub fn to_model(&self) -> Result<GnnModel<f32>, CheckpointError> {
        let mut model = GnnModel::<f32>::new(self.config.clone(), self.input_dim)?;
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.tensors.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} tensors for a model with {} parameters",
                self.tensors.len(),
                names.len()
            )));
        }
        for ((slot, expect), (name, data)) in model.params_mut().into_iter().zip(&names).zip(&self.tensors) {
            if name != expect || slot.shape() != data.shape() {
                return Err(CheckpointError::Malformed(format!("unexpected tensor `{name}` {:?}", data.shape())));
            }
            *slot = data.to_f32();
        }
        Ok(model)
    }

    pub fn to_quantized(&self) -> Result<QuantizedModel, CheckpointError> {
        let tensors = self
            .tensors
            .iter()
            .map(|(n, t)| match t {
                TensorData::Q4(q) => Ok((n.clone(), q.clone())),
                TensorData::F32(_) => Err(CheckpointError::Malformed(format!("tensor `{n}` is not quantized"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(QuantizedModel::from_parts(self.config.clone(), self.input_dim, tensors)?)
    }

    pub fn header(&self) -> Header {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let mut buf = Vec::new();
                t.encode(&mut buf);
                let entry = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    dtype: t.dtype(),
                    offset,
                    length: buf.len(),
                };
                offset += buf.len();
                entry
            })
            .collect();
        Header {
            config: self.config.clone(),
            input_dim: self.input_dim,
            vocab: self.vocab.clone(),
            tensors,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serialization cannot fail");
        let mut out = Vec::with_capacity(12 + header.len() + self.payload_bytes());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            t.encode(&mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let len = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(12..)
            .filter(|b| b.len() >= len)
            .ok_or_else(|| CheckpointError::Malformed("truncated header".into()))?;
        let header: Header =
            serde_json::from_slice(&body[..len]).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let payload = &body[len..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let raw = e
                .offset
                .checked_add(e.length)
                .and_then(|end| payload.get(e.offset..end))
                .ok_or_else(|| CheckpointError::Malformed(format!("tensor `{}` out of bounds", e.name)))?;
            let n: usize = e.shape.iter().product();
            let data = match e.dtype {
                DType::F32 => {
                    if raw.len() != 4 * n {
                        return Err(CheckpointError::Malformed(format!("tensor `{}` length", e.name)));
                    }
                    let v = raw
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                        .collect();
                    TensorData::F32(Tensor::from_vec(&e.shape, v)?)
                }
                DType::Q4 => {
                    let packed_len = n.div_ceil(2);
                    if raw.len() != packed_len + 4 {
                        return Err(CheckpointError::Malformed(format!("tensor `{}` length", e.name)));
                    }
                    let scale = f32::from_le_bytes(raw[packed_len..].try_into().expect("4 bytes"));
                    TensorData::Q4(QuantizedTensor {
                        shape: e.shape.clone(),
                        scale,
                        packed: raw[..packed_len].to_vec(),
                    })
                }
            };
            tensors.push((e.name.clone(), data));
        }
        Ok(Checkpoint {
            config: header.config,
            input_dim: header.input_dim,
            vocab: header.vocab,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// q4 payload bytes over f32 payload bytes.
pub fn checkpoint_size_ratio(fp: &Checkpoint, q4: &Checkpoint) -> Result<f64, QuantError> {
    let base = fp.payload_bytes();
    if base == 0 || q4.tensors.is_empty() {
        return Err(QuantError::EmptyModel);
    }
    Ok(q4.payload_bytes() as f64 / base as f64)
}
