//! Training and scoring GNN models over holdout splits and fold plans.

use serde::{Deserialize, Serialize};

use super::kfold::{kfold_plan, FoldPlan};
use super::report::{Mode, Report};
use super::split::{carve, make_split, Fractions};
use super::{EvalError, Metrics};
use crate::gnn::{evaluate, train, GnnConfig, GnnModel, LabeledGraph};
use crate::quant::quantize_model;

/// Share of each fold's training part held out for snapshot selection. At
/// zero the snapshot is chosen on training F1; a carve-out of a few designs
/// (one or two clean) made selection noisier than the extra training data.
pub const FOLD_VAL_FRACTION: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub fp32: Metrics,
    pub q4: Option<Metrics>,
    pub best_epoch: usize,
}

fn pick(graphs: &[LabeledGraph], idx: &[usize]) -> Vec<LabeledGraph> {
    idx.iter().map(|&i| graphs[i].clone()).collect()
}

fn input_dim(graphs: &[LabeledGraph]) -> usize {
    graphs.first().map_or(0, |g| g.input.features.cols())
}

fn fit_and_score(
    graphs: &[LabeledGraph],
    fold: usize,
    train_idx: &[usize],
    val_idx: &[usize],
    test_idx: &[usize],
    config: &GnnConfig,
    compare: bool,
) -> Result<FoldOutcome, EvalError> {
    let model = GnnModel::new(config.clone(), input_dim(graphs))?;
    let state = train(model, &pick(graphs, train_idx), &pick(graphs, val_idx))?;
    let test = pick(graphs, test_idx);
    let fp32 = evaluate(&state.best, &test)?;
    let q4 = if compare {
        // Quantized inference is forward on the dequantized weights.
        Some(evaluate(quantize_model(&state.best)?.dequantized(), &test)?)
    } else {
        None
    };
    Ok(FoldOutcome {
        fold,
        fp32,
        q4,
        best_epoch: state.best_epoch,
    })
}

/// Trains a fresh model on one fold's training part (minus a stratified
/// carve-out of `FOLD_VAL_FRACTION`) and scores it on the fold's test part.
pub fn run_fold(graphs: &[LabeledGraph], plan: &FoldPlan, config: &GnnConfig, compare: bool) -> Result<FoldOutcome, EvalError> {
    let labels: Vec<u8> = graphs.iter().map(|g| g.label).collect();
    let (train_idx, val_idx) = carve(&plan.train, &labels, FOLD_VAL_FRACTION, config.seed ^ plan.fold as u64);
    fit_and_score(graphs, plan.fold, &train_idx, &val_idx, &plan.test, config, compare)
}

pub fn report_from(mode: Mode, outcomes: &[FoldOutcome], config: &GnnConfig) -> Report {
    let report = Report::new(mode, outcomes.iter().map(|o| o.fp32).collect(), config.clone(), config.seed);
    let q4: Option<Vec<Metrics>> = outcomes.iter().map(|o| o.q4).collect();
    match q4 {
        Some(q) if !outcomes.is_empty() => report.with_q4(q),
        _ => report,
    }
}

/// Stratified k-fold cross-validation with folds drawn from `config.seed`.
pub fn kfold_gnn(graphs: &[LabeledGraph], config: &GnnConfig, k: usize, compare: bool) -> Result<Report, EvalError> {
    let labels: Vec<u8> = graphs.iter().map(|g| g.label).collect();
    let outcomes = kfold_plan(&labels, k, config.seed)?
        .iter()
        .map(|p| run_fold(graphs, p, config, compare))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report_from(Mode::Kfold, &outcomes, config))
}

/// One train/validation/test split.
pub fn holdout_gnn(
    graphs: &[LabeledGraph],
    config: &GnnConfig,
    fractions: Fractions,
    compare: bool,
) -> Result<Report, EvalError> {
    let labels: Vec<u8> = graphs.iter().map(|g| g.label).collect();
    let s = make_split(&labels, fractions, config.seed)?;
    let outcome = fit_and_score(graphs, 0, &s.train, &s.val, &s.test, config, compare)?;
    Ok(report_from(Mode::Holdout, &[outcome], config))
}
