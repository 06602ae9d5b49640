//! Splits, cross-validation, metrics, and reports.

mod experiment;
mod kfold;
mod metrics;
mod report;
mod split;

use thiserror::Error;

pub use experiment::{holdout_gnn, kfold_gnn, report_from, run_fold, FoldOutcome, FOLD_VAL_FRACTION};
pub use kfold::{kfold_evaluate, kfold_plan, mean_metrics, DefinedCounts, FoldPlan, MeanMetrics};
pub use metrics::{compute_metrics, Metrics};
pub use report::{Mode, QuantRows, Report};
pub use split::{carve, make_split, stratified_folds, Fractions, Split};

use crate::gnn::GnnError;
use crate::quant::QuantError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("class {class} has {count} designs; at least {need} are required")]
    TooFewDesigns { class: u8, count: usize, need: usize },
    #[error("invalid split: {0}")]
    InvalidFractions(String),
    #[error("classifier returned {got} predictions for {expected} designs")]
    PredictionCount { expected: usize, got: usize },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Quant(#[from] QuantError),
}
