//! Model configuration, parameters, forward pass, and gradients.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::GraphBatch;
use super::layers::{GatHead, GinMlp, Layer, LayerCache};
use super::pool::{mean_max, mean_max_backward, topk_pool, topk_pool_backward, PoolOutput};
use super::tensor::{Real, Tensor};
use super::GnnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arch {
    #[serde(rename = "GCN")]
    Gcn,
    #[serde(rename = "GAT")]
    Gat,
    #[serde(rename = "GIN")]
    Gin,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Gcn, Arch::Gat, Arch::Gin];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gcn => "GCN",
            Arch::Gat => "GAT",
            Arch::Gin => "GIN",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = GnnError;

    fn from_str(s: &str) -> Result<Self, GnnError> {
        match s.to_ascii_uppercase().as_str() {
            "GCN" => Ok(Arch::Gcn),
            "GAT" => Ok(Arch::Gat),
            "GIN" => Ok(Arch::Gin),
            _ => Err(GnnError::InvalidConfig(format!("unknown architecture `{s}` (expected gcn, gat, or gin)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub arch: Arch,
    pub num_layers: usize,
    pub hidden_units: usize,
    pub dropout: f64,
    pub attention_heads: usize,
    pub pooling_ratio: f64,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            arch: Arch::Gcn,
            num_layers: 2,
            hidden_units: 200,
            dropout: 0.5,
            attention_heads: 4,
            pooling_ratio: 0.8,
            embedding_dim: 2,
            learning_rate: 0.001,
            epochs: 200,
            batch_size: 4,
            eval_every: 10,
            seed: 42,
        }
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<(), GnnError> {
        let bad = |msg: String| Err(GnnError::InvalidConfig(msg));
        if self.num_layers == 0 {
            return bad("num_layers must be at least 1".into());
        }
        for (name, v) in [
            ("hidden_units", self.hidden_units),
            ("attention_heads", self.attention_heads),
            ("embedding_dim", self.embedding_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.pooling_ratio > 0.0 && self.pooling_ratio <= 1.0) {
            return bad(format!("pooling_ratio {} outside (0, 1]", self.pooling_ratio));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be finite and non-negative", self.learning_rate));
        }
        if self.arch == Arch::Gat && self.num_layers > 1 && self.hidden_units % self.attention_heads != 0 {
            return bad(format!(
                "hidden_units {} not divisible by {} attention heads",
                self.hidden_units, self.attention_heads
            ));
        }
        Ok(())
    }
}

/// Network parameters. Every GNN layer outputs `hidden_units` features;
/// the readout maps `[mean ‖ max]` to `embedding_dim`, then to 2 logits.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnModel<T = f32> {
    pub config: GnnConfig,
    pub input_dim: usize,
    pub layers: Vec<Layer<T>>,
    pub pool_score: Tensor<T>,
    pub proj_weight: Tensor<T>,
    pub proj_bias: Tensor<T>,
    pub cls_weight: Tensor<T>,
    pub cls_bias: Tensor<T>,
}

fn glorot<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f32(rng.gen_range(-bound..=bound))).collect();
    Tensor::from_vec(shape, data).expect("shape product")
}

impl<T: Real> GnnModel<T> {
    /// Glorot-uniform weights from `config.seed`; biases and GIN ε start at 0.
    pub fn new(config: GnnConfig, input_dim: usize) -> Result<Self, GnnError> {
        config.validate()?;
        if input_dim == 0 {
            return Err(GnnError::InvalidConfig("input dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let hidden = config.hidden_units;
        let mut layers = Vec::with_capacity(config.num_layers);
        let mut d_in = input_dim;
        for i in 0..config.num_layers {
            let last = i + 1 == config.num_layers;
            let layer = match config.arch {
                Arch::Gcn => Layer::Gcn {
                    weight: glorot(&mut rng, &[d_in, hidden], d_in, hidden),
                },
                Arch::Gat => {
                    let f = if last { hidden } else { hidden / config.attention_heads };
                    let heads = (0..config.attention_heads)
                        .map(|_| GatHead {
                            weight: glorot(&mut rng, &[d_in, f], d_in, f),
                            attention: glorot(&mut rng, &[2 * f], 2 * f, 1),
                        })
                        .collect();
                    Layer::Gat { heads, concat: !last }
                }
                Arch::Gin => Layer::Gin {
                    mlp: GinMlp {
                        w1: glorot(&mut rng, &[d_in, hidden], d_in, hidden),
                        b1: Tensor::zeros(&[hidden]),
                        w2: glorot(&mut rng, &[hidden, hidden], hidden, hidden),
                        b2: Tensor::zeros(&[hidden]),
                    },
                    eps: Tensor::zeros(&[1]),
                },
            };
            d_in = layer.output_dim();
            layers.push(layer);
        }
        let emb = config.embedding_dim;
        Ok(GnnModel {
            pool_score: glorot(&mut rng, &[hidden], hidden, 1),
            proj_weight: glorot(&mut rng, &[2 * hidden, emb], 2 * hidden, emb),
            proj_bias: Tensor::zeros(&[emb]),
            cls_weight: glorot(&mut rng, &[emb, 2], emb, 2),
            cls_bias: Tensor::zeros(&[2]),
            config,
            input_dim,
            layers,
        })
    }

    /// Named parameters in canonical order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Gcn { weight } => out.push((format!("layers.{i}.weight"), weight)),
                Layer::Gat { heads, .. } => {
                    for (k, h) in heads.iter().enumerate() {
                        out.push((format!("layers.{i}.heads.{k}.weight"), &h.weight));
                        out.push((format!("layers.{i}.heads.{k}.attention"), &h.attention));
                    }
                }
                Layer::Gin { mlp, eps } => {
                    out.push((format!("layers.{i}.mlp.0.weight"), &mlp.w1));
                    out.push((format!("layers.{i}.mlp.0.bias"), &mlp.b1));
                    out.push((format!("layers.{i}.mlp.1.weight"), &mlp.w2));
                    out.push((format!("layers.{i}.mlp.1.bias"), &mlp.b2));
                    out.push((format!("layers.{i}.eps"), eps));
                }
            }
        }
        out.push(("pool.score".into(), &self.pool_score));
        out.push(("readout.proj.weight".into(), &self.proj_weight));
        out.push(("readout.proj.bias".into(), &self.proj_bias));
        out.push(("classifier.weight".into(), &self.cls_weight));
        out.push(("classifier.bias".into(), &self.cls_bias));
        out
    }

    /// Same order as [`GnnModel::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Gcn { weight } => out.push(weight),
                Layer::Gat { heads, .. } => {
                    for h in heads {
                        out.push(&mut h.weight);
                        out.push(&mut h.attention);
                    }
                }
                Layer::Gin { mlp, eps } => {
                    out.push(&mut mlp.w1);
                    out.push(&mut mlp.b1);
                    out.push(&mut mlp.w2);
                    out.push(&mut mlp.b2);
                    out.push(eps);
                }
            }
        }
        out.push(&mut self.pool_score);
        out.push(&mut self.proj_weight);
        out.push(&mut self.proj_bias);
        out.push(&mut self.cls_weight);
        out.push(&mut self.cls_bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Same structure with every parameter zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for p in z.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    pub fn cast<U: Real>(&self) -> GnnModel<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Gcn { weight } => Layer::Gcn { weight: weight.cast() },
                Layer::Gat { heads, concat } => Layer::Gat {
                    heads: heads
                        .iter()
                        .map(|h| GatHead {
                            weight: h.weight.cast(),
                            attention: h.attention.cast(),
                        })
                        .collect(),
                    concat: *concat,
                },
                Layer::Gin { mlp, eps } => Layer::Gin {
                    mlp: GinMlp {
                        w1: mlp.w1.cast(),
                        b1: mlp.b1.cast(),
                        w2: mlp.w2.cast(),
                        b2: mlp.b2.cast(),
                    },
                    eps: eps.cast(),
                },
            })
            .collect();
        GnnModel {
            config: self.config.clone(),
            input_dim: self.input_dim,
            layers,
            pool_score: self.pool_score.cast(),
            proj_weight: self.proj_weight.cast(),
            proj_bias: self.proj_bias.cast(),
            cls_weight: self.cls_weight.cast(),
            cls_bias: self.cls_bias.cast(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|(_, t)| t.is_finite())
    }

    /// Eval-mode logits, one row per graph.
    pub fn forward(&self, batch: &GraphBatch<T>) -> Result<Tensor<T>, GnnError> {
        Ok(self.run(batch, None)?.0)
    }

    /// Train-mode logits: inverted dropout after every hidden layer.
    pub fn forward_train(&self, batch: &GraphBatch<T>, rng: &mut dyn RngCore) -> Result<Tensor<T>, GnnError> {
        Ok(self.run(batch, Some(rng))?.0)
    }

    /// Softmax probabilities of the trojan class, per graph.
    pub fn predict_proba(&self, batch: &GraphBatch<T>) -> Result<Vec<f64>, GnnError> {
        let logits = self.forward(batch)?;
        Ok((0..logits.rows())
            .map(|g| {
                let r = logits.row(g);
                let (a, b) = (r[0].to_f64(), r[1].to_f64());
                1.0 / (1.0 + (a - b).exp())
            })
            .collect())
    }

    /// Every piecewise choice of an eval-mode forward pass: ReLU and
    /// LeakyReLU sides, pooled node ids, and max-readout positions. Parameter
    /// settings with equal patterns lie on the same smooth piece, which is
    /// where finite differences are meaningful. Maxima equal to within
    /// rounding (structurally identical nodes) count as one choice.
    pub fn branch_pattern(&self, batch: &GraphBatch<T>) -> Result<Vec<usize>, GnnError> {
        let (_, trace) = self.run(batch, None)?;
        let mut bits = Vec::new();
        for c in &trace.caches {
            c.push_pattern(&mut bits);
        }
        let mut out: Vec<usize> = bits.into_iter().map(usize::from).collect();
        out.extend(&trace.pooled.kept);
        let h = &trace.pooled.features;
        let offsets = &trace.pooled.batch.offsets;
        for (g, best) in trace.argmax.iter().enumerate() {
            for (j, &v) in best.iter().enumerate() {
                let m = h.at(v, j);
                let slack = T::from_f64(1e-9) * (T::one() + m.abs());
                let first = (offsets[g]..offsets[g + 1]).find(|&u| h.at(u, j) >= m - slack).unwrap_or(v);
                out.push(first);
            }
        }
        Ok(out)
    }

    fn run(&self, batch: &GraphBatch<T>, mut rng: Option<&mut dyn RngCore>) -> Result<(Tensor<T>, Trace<T>), GnnError> {
        if batch.features.cols() != self.input_dim {
            return Err(GnnError::ShapeMismatch(format!(
                "model expects {} input features, batch has {}",
                self.input_dim,
                batch.features.cols()
            )));
        }
        let mut h = batch.features.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (mut out, cache) = layer.forward_cached(&h, batch)?;
            let mask = match rng.as_deref_mut() {
                Some(r) if i < last && self.config.dropout > 0.0 => {
                    let keep = 1.0 - self.config.dropout;
                    let scale = T::from_f64(1.0 / keep);
                    let m: Vec<T> = (0..out.len())
                        .map(|_| if r.gen::<f64>() < keep { scale } else { T::zero() })
                        .collect();
                    for (o, &k) in out.data_mut().iter_mut().zip(&m) {
                        *o *= k;
                    }
                    Some(m)
                }
                _ => None,
            };
            caches.push(cache);
            masks.push(mask);
            h = out;
        }
        debug_assert!(h.is_finite(), "non-finite activations");
        let pooled = topk_pool(&h, batch, &self.pool_score, self.config.pooling_ratio)?;
        let (readout, argmax) = mean_max(&pooled.features, &pooled.batch.offsets);
        let mut emb = readout.matmul(&self.proj_weight)?;
        emb.add_row_vector(&self.proj_bias);
        let mut logits = emb.matmul(&self.cls_weight)?;
        logits.add_row_vector(&self.cls_bias);
        let trace = Trace {
            caches,
            masks,
            last_hidden: h,
            pooled,
            readout,
            argmax,
            emb,
        };
        Ok((logits, trace))
    }

    /// Mean cross-entropy and its gradient for every parameter. With `rng`
    /// the pass runs in train mode (dropout active).
    pub fn loss_and_gradients(
        &self,
        batch: &GraphBatch<T>,
        labels: &[u8],
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(T, GnnModel<T>), GnnError> {
        let (logits, trace) = self.run(batch, rng)?;
        let (loss, d_logits) = cross_entropy(&logits, labels)?;
        let mut grad = self.zeros_like();

        grad.cls_weight.add_assign(&trace.emb.t_matmul(&d_logits));
        grad.cls_bias.add_assign(&d_logits.column_sums());
        let d_emb = d_logits.matmul_t(&self.cls_weight);
        grad.proj_weight.add_assign(&trace.readout.t_matmul(&d_emb));
        grad.proj_bias.add_assign(&d_emb.column_sums());
        let d_readout = d_emb.matmul_t(&self.proj_weight);
        let d_pooled = mean_max_backward(
            trace.pooled.features.rows(),
            &trace.pooled.batch.offsets,
            &trace.argmax,
            &d_readout,
        );
        let mut d_h = topk_pool_backward(&trace.last_hidden, &self.pool_score, &trace.pooled, &d_pooled, &mut grad.pool_score);
        for i in (0..self.layers.len()).rev() {
            if let Some(mask) = &trace.masks[i] {
                for (d, &m) in d_h.data_mut().iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            d_h = self.layers[i].backward(&trace.caches[i], batch, &d_h, &mut grad.layers[i]);
        }
        debug_assert!(grad.is_finite(), "non-finite gradients");
        Ok((loss, grad))
    }
}

struct Trace<T> {
    caches: Vec<LayerCache<T>>,
    masks: Vec<Option<Vec<T>>>,
    last_hidden: Tensor<T>,
    pooled: PoolOutput<T>,
    readout: Tensor<T>,
    argmax: Vec<Vec<usize>>,
    emb: Tensor<T>,
}

/// Mean softmax cross-entropy over rows and its gradient w.r.t. the logits.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[u8]) -> Result<(T, Tensor<T>), GnnError> {
    let b = logits.rows();
    if labels.len() != b || logits.cols() != 2 {
        return Err(GnnError::ShapeMismatch(format!(
            "{} labels for logits {:?}",
            labels.len(),
            logits.shape()
        )));
    }
    let inv = T::one() / T::from_f64(b as f64);
    let mut grad = Tensor::zeros(&[b, 2]);
    let mut loss = T::zero();
    for (g, &y) in labels.iter().enumerate() {
        let r = logits.row(g);
        let m = r[0].max(r[1]);
        let e = [(r[0] - m).exp(), (r[1] - m).exp()];
        let sum = e[0] + e[1];
        loss += (m + sum.ln() - r[y as usize]) * inv;
        let d = grad.row_mut(g);
        for c in 0..2 {
            let target = if c == y as usize { T::one() } else { T::zero() };
            d[c] = (e[c] / sum - target) * inv;
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::{extract, Vocabulary};
    use crate::fixtures::FULL_ADDER;
    use crate::gnn::GraphInput;
    use crate::verilog::SourceUnit;

    fn full_adder_batch() -> (GraphBatch<f32>, usize) {
        let g = extract(&SourceUnit::single("fa.v", FULL_ADDER, "full_adder")).unwrap().0;
        let vocab = Vocabulary::standard();
        let input = GraphInput::from_graph(&g, &vocab);
        (GraphBatch::from_inputs(&[&input]).unwrap(), vocab.feature_dim())
    }

    #[test]
    fn equal_logits_gradient() {
        let logits = Tensor::<f64>::from_vec(&[1, 2], vec![0.3, 0.3]).unwrap();
        let (loss, d) = cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(d.data(), &[-0.5, 0.5]);
        let logits = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 1.0, -2.0, -2.0]).unwrap();
        let (_, d) = cross_entropy(&logits, &[0, 0]).unwrap();
        assert_eq!(d.data(), &[-0.25, 0.25, -0.25, 0.25]);
    }

    #[test]
    fn gcn2_full_adder_smoke() {
        let (batch, dim) = full_adder_batch();
        let model = GnnModel::<f32>::new(GnnConfig::default(), dim).unwrap();
        let logits = model.forward(&batch).unwrap();
        assert_eq!(logits.shape(), &[1, 2]);
        assert!(logits.is_finite());
        assert_eq!(logits, model.forward(&batch).unwrap());
    }

    #[test]
    fn dropout_scales_survivors() {
        let (batch, dim) = full_adder_batch();
        let cfg = GnnConfig {
            num_layers: 3,
            ..GnnConfig::default()
        };
        let model = GnnModel::<f32>::new(cfg, dim).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(2);
        let a = model.forward_train(&batch, &mut r1).unwrap();
        let b = model.forward_train(&batch, &mut r2).unwrap();
        assert_ne!(a, b);
        assert!(a.is_finite());
    }

    #[test]
    fn config_validation() {
        assert!(GnnConfig::default().validate().is_ok());
        let zero = GnnConfig {
            num_layers: 0,
            ..GnnConfig::default()
        };
        assert!(matches!(zero.validate(), Err(GnnError::InvalidConfig(_))));
        let dropout = GnnConfig {
            dropout: 1.0,
            ..GnnConfig::default()
        };
        assert!(dropout.validate().is_err());
        assert_eq!("gat".parse::<Arch>().unwrap(), Arch::Gat);
    }

    #[test]
    fn parameter_names_match_mutable_order() {
        for arch in Arch::ALL {
            let cfg = GnnConfig {
                arch,
                hidden_units: 8,
                ..GnnConfig::default()
            };
            let mut m = GnnModel::<f64>::new(cfg, 5).unwrap();
            let shapes: Vec<Vec<usize>> = m.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
            let mut_shapes: Vec<Vec<usize>> = m.params_mut().iter().map(|t| t.shape().to_vec()).collect();
            assert_eq!(shapes, mut_shapes);
        }
    }
}
