//! Adam optimizer and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::batch::{GraphBatch, GraphInput};
use super::model::GnnModel;
use super::tensor::{Real, Tensor};
use super::GnnError;
use crate::eval::{compute_metrics, Metrics};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Graphs scored per forward pass at inference time.
const EVAL_CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGraph {
    pub input: GraphInput,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T = f32> {
    pub lr: f64,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(model: &GnnModel<T>, lr: f64) -> Self {
        let zeros: Vec<Tensor<T>> = model.params().iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        Adam {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, model: &mut GnnModel<T>, grad: &GnnModel<T>) {
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::from_f64(ADAM_BETA1), T::from_f64(ADAM_BETA2));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(ADAM_EPS);
        let grads = grad.params();
        for (i, p) in model.params_mut().into_iter().enumerate() {
            let g = grads[i].1.data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + (T::one() - b1) * g[j];
                v[j] = b2 * v[j] + (T::one() - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: GnnModel<f32>,
    pub optimizer: Adam<f32>,
    pub epoch: usize,
    pub rng: ChaCha8Rng,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub validation: Vec<ValidationRecord>,
    pub best: GnnModel<f32>,
    pub best_epoch: usize,
    pub best_f1: f64,
}

/// Trojan probability for each graph, in eval mode.
pub fn predict_proba(model: &GnnModel<f32>, graphs: &[&GraphInput]) -> Result<Vec<f64>, GnnError> {
    let mut out = Vec::with_capacity(graphs.len());
    for chunk in graphs.chunks(EVAL_CHUNK) {
        out.extend(model.predict_proba(&GraphBatch::from_inputs(chunk)?)?);
    }
    Ok(out)
}

/// Class 1 when `p(trojan) ≥ 0.5`.
pub fn predict_labels(model: &GnnModel<f32>, graphs: &[&GraphInput]) -> Result<Vec<u8>, GnnError> {
    Ok(predict_proba(model, graphs)?.into_iter().map(|p| u8::from(p >= 0.5)).collect())
}

pub fn evaluate(model: &GnnModel<f32>, set: &[LabeledGraph]) -> Result<Metrics, GnnError> {
    let inputs: Vec<&GraphInput> = set.iter().map(|s| &s.input).collect();
    let labels: Vec<u8> = set.iter().map(|s| s.label).collect();
    Ok(compute_metrics(&predict_labels(model, &inputs)?, &labels))
}

/// [`train_with`] without a progress callback.
pub fn train(model: GnnModel<f32>, train_set: &[LabeledGraph], val_set: &[LabeledGraph]) -> Result<TrainState, GnnError> {
    train_with(model, train_set, val_set, |_| {})
}

/// Minibatch Adam on mean cross-entropy with the model's config. Every
/// `eval_every` epochs the validation set (the training set if it is empty)
/// is scored; the parameters with the best F1 so far are kept, later epochs
/// winning ties.
pub fn train_with(
    model: GnnModel<f32>,
    train_set: &[LabeledGraph],
    val_set: &[LabeledGraph],
    mut on_eval: impl FnMut(&ValidationRecord),
) -> Result<TrainState, GnnError> {
    if train_set.is_empty() {
        return Err(GnnError::EmptyTrainingSet);
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    let check_set = if val_set.is_empty() { train_set } else { val_set };
    let mut state = TrainState {
        optimizer: Adam::new(&model, cfg.learning_rate),
        best: model.clone(),
        model,
        epoch: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed)),
        losses: Vec::with_capacity(cfg.epochs),
        validation: Vec::new(),
        best_epoch: 0,
        best_f1: f64::NEG_INFINITY,
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut state.rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&GraphInput> = chunk.iter().map(|&i| &train_set[i].input).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| train_set[i].label).collect();
            let batch = GraphBatch::from_inputs(&inputs)?;
            let (loss, grad) = state.model.loss_and_gradients(&batch, &labels, Some(&mut state.rng))?;
            total += loss as f64 * chunk.len() as f64;
            state.optimizer.update(&mut state.model, &grad);
        }
        state.epoch = epoch;
        let mean_loss = total / train_set.len() as f64;
        state.losses.push(mean_loss);
        if epoch % cfg.eval_every == 0 {
            let metrics = evaluate(&state.model, check_set)?;
            let f1 = metrics.f1.unwrap_or(0.0);
            if f1 >= state.best_f1 {
                state.best_f1 = f1;
                state.best_epoch = epoch;
                state.best = state.model.clone();
            }
            let record = ValidationRecord {
                epoch,
                train_loss: mean_loss,
                metrics,
            };
            on_eval(&record);
            state.validation.push(record);
        }
    }
    if state.validation.is_empty() {
        state.best = state.model.clone();
        state.best_epoch = state.epoch;
    }
    Ok(state)
}
