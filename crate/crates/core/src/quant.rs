//! 4-bit post-training weight quantization.
//!
//! Each tensor gets one scale `S = max|W| / 7` and signed codes in
//! `[-8, 7]`, packed two per byte (low nibble first). Activations stay f32.

use thiserror::Error;

use crate::gnn::{GnnConfig, GnnError, GnnModel, GraphBatch, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("tensor `{0}` holds a non-finite weight")]
    NonFiniteWeight(String),
    #[error("model has no tensor payload")]
    EmptyModel,
    #[error("malformed quantized tensor: {0}")]
    Malformed(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
}

pub const CODE_MIN: i8 = -8;
pub const CODE_MAX: i8 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub scale: f32,
    /// `⌈n/2⌉` bytes, element `2i` in the low nibble of byte `i`.
    pub packed: Vec<u8>,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn code(&self, i: usize) -> i8 {
        let byte = self.packed[i / 2];
        let nibble = if i % 2 == 0 { byte & 0x0f } else { byte >> 4 };
        ((nibble << 4) as i8) >> 4
    }

    pub fn codes(&self) -> Vec<i8> {
        (0..self.len()).map(|i| self.code(i)).collect()
    }

    pub fn from_codes(shape: &[usize], codes: &[i8], scale: f32) -> Result<Self, QuantError> {
        if codes.len() != shape.iter().product::<usize>() {
            return Err(QuantError::Malformed(format!("{} codes for shape {shape:?}", codes.len())));
        }
        if let Some(c) = codes.iter().find(|c| !(CODE_MIN..=CODE_MAX).contains(*c)) {
            return Err(QuantError::Malformed(format!("code {c} outside [-8, 7]")));
        }
        let packed = codes
            .chunks(2)
            .map(|pair| {
                let lo = pair[0] as u8 & 0x0f;
                let hi = pair.get(1).map_or(0, |&c| c as u8 & 0x0f);
                lo | (hi << 4)
            })
            .collect();
        Ok(QuantizedTensor {
            shape: shape.to_vec(),
            scale,
            packed,
        })
    }

    /// Packed nibbles plus the 4-byte scale.
    pub fn payload_bytes(&self) -> usize {
        self.packed.len() + 4
    }
}

/// Halves round away from zero; `f64::round` guarantees this on every
/// platform, unlike the ties-to-even default of many other runtimes.
fn round_half_away(x: f64) -> f64 {
    x.round()
}

/// Prefers an f32 within four ulps of `max / 7` for which `7 · S`
/// reproduces `max` exactly, so the extreme weight round-trips; such an S
/// does not always exist, and then the extreme lands one ulp away.
fn scale_for(max: f32) -> f32 {
    let s0 = (max as f64 / 7.0) as f32;
    let mut candidates = vec![s0];
    let mut lo = s0;
    let mut hi = s0;
    for _ in 0..4 {
        lo = f32::from_bits(lo.to_bits() - 1);
        hi = f32::from_bits(hi.to_bits() + 1);
        candidates.push(lo);
        candidates.push(hi);
    }
    candidates.into_iter().find(|&s| 7.0 * s == max).unwrap_or(s0)
}

pub fn quantize_tensor(w: &Tensor<f32>) -> Result<QuantizedTensor, QuantError> {
    quantize_named("", w)
}

fn quantize_named(name: &str, w: &Tensor<f32>) -> Result<QuantizedTensor, QuantError> {
    if !w.is_finite() {
        return Err(QuantError::NonFiniteWeight(name.to_string()));
    }
    let max = w.data().iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        return QuantizedTensor::from_codes(w.shape(), &vec![0; w.len()], 1.0);
    }
    // Codes use the exact ratio 7w/max, so grid points and halfway cases do
    // not depend on how S itself rounds to f32.
    let codes: Vec<i8> = w
        .data()
        .iter()
        .map(|&v| round_half_away(v as f64 * 7.0 / max as f64).clamp(CODE_MIN as f64, CODE_MAX as f64) as i8)
        .collect();
    QuantizedTensor::from_codes(w.shape(), &codes, scale_for(max))
}

pub fn dequantize(q: &QuantizedTensor) -> Tensor<f32> {
    let data = (0..q.len()).map(|i| q.code(i) as f32 * q.scale).collect();
    Tensor::from_vec(&q.shape, data).expect("shape matches code count")
}

/// A model whose every parameter tensor is 4-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: GnnConfig,
    pub input_dim: usize,
    /// Canonical parameter order, see [`GnnModel::params`].
    pub tensors: Vec<(String, QuantizedTensor)>,
    dequantized: GnnModel<f32>,
}

impl QuantizedModel {
    pub fn from_parts(config: GnnConfig, input_dim: usize, tensors: Vec<(String, QuantizedTensor)>) -> Result<Self, QuantError> {
        let mut model = GnnModel::<f32>::new(config.clone(), input_dim)?;
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        if names.len() != tensors.len() {
            return Err(QuantError::Malformed(format!(
                "{} tensors for a model with {} parameters",
                tensors.len(),
                names.len()
            )));
        }
        for ((slot, expect), (name, q)) in model.params_mut().into_iter().zip(&names).zip(&tensors) {
            if name != expect || slot.shape() != q.shape.as_slice() {
                return Err(QuantError::Malformed(format!(
                    "tensor `{name}` {:?} where `{expect}` {:?} was expected",
                    q.shape,
                    slot.shape()
                )));
            }
            *slot = dequantize(q);
        }
        Ok(QuantizedModel {
            config,
            input_dim,
            tensors,
            dequantized: model,
        })
    }

    /// The f32 model with every weight replaced by its dequantized value.
    pub fn dequantized(&self) -> &GnnModel<f32> {
        &self.dequantized
    }

    pub fn payload_bytes(&self) -> usize {
        self.tensors.iter().map(|(_, q)| q.payload_bytes()).sum()
    }
}

pub fn quantize_model(model: &GnnModel<f32>) -> Result<QuantizedModel, QuantError> {
    let tensors = model
        .params()
        .into_iter()
        .map(|(name, t)| Ok((name.clone(), quantize_named(&name, t)?)))
        .collect::<Result<Vec<_>, QuantError>>()?;
    QuantizedModel::from_parts(model.config.clone(), model.input_dim, tensors)
}

/// Forward pass of the f32 network with `Ŵ` in place of `W`; activations
/// stay f32.
pub fn quantized_forward(q: &QuantizedModel, batch: &GraphBatch<f32>) -> Result<Tensor<f32>, GnnError> {
    q.dequantized.forward(batch)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn worked_example() {
        let q = quantize_tensor(&t(&[0.7, -0.35, 0.0])).unwrap();
        assert!((q.scale - 0.1).abs() < 1e-7);
        assert_eq!(q.codes(), vec![7, -4, 0]);
        let d = dequantize(&q);
        for (a, b) in d.data().iter().zip([0.7f32, -0.4, 0.0]) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(d.data()[0], 0.7);
    }

    #[test]
    fn all_zero_tensor() {
        let q = quantize_tensor(&t(&[0.0; 5])).unwrap();
        assert_eq!(q.scale, 1.0);
        assert_eq!(q.codes(), vec![0; 5]);
        assert_eq!(dequantize(&q).data(), &[0.0; 5]);
    }

    #[test]
    fn nibble_packing_low_first() {
        let q = QuantizedTensor::from_codes(&[3], &[-1, 2, -8], 1.0).unwrap();
        assert_eq!(q.packed, vec![0x2f, 0x08]);
        assert_eq!(q.codes(), vec![-1, 2, -8]);
        assert_eq!(q.payload_bytes(), 2 + 4);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(quantize_tensor(&t(&[1.0, f32::NAN])), Err(QuantError::NonFiniteWeight(_))));
    }

    #[test]
    fn half_away_from_zero() {
        assert_eq!(round_half_away(2.5), 3.0);
        assert_eq!(round_half_away(-2.5), -3.0);
        assert_eq!(round_half_away(-0.4), 0.0);
    }
}
