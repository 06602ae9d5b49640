//! Dense-tensor graph neural network engine.
//!
//! GCN, GAT, and GIN layers share one aggregate-then-update contract over a
//! block-diagonal [`GraphBatch`]. One top-k pooling step follows the last
//! layer, then a `[mean ‖ max]` readout, a projection to the graph
//! embedding, and a 2-logit classifier. Gradients are hand-derived per
//! layer; [`Real`] lets the same code run in `f64` for gradient checks.

mod batch;
mod layers;
mod model;
mod pool;
mod tensor;
mod train;

use thiserror::Error;

pub use batch::{GraphBatch, GraphInput};
pub use layers::{gat_attention, gat_layer, gcn_layer, gin_layer, GatHead, GinMlp, Layer, LEAKY_SLOPE};
pub use model::{cross_entropy, Arch, GnnConfig, GnnModel};
pub use pool::{keep_count, mean_max, topk_pool, PoolOutput};
pub use tensor::{Real, Tensor};
pub use train::{
    evaluate, predict_labels, predict_proba, train, train_with, Adam, LabeledGraph, TrainState, ValidationRecord,
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
}
