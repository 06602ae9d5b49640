//! k-fold cross-validation and fold averaging.

use serde::{Deserialize, Serialize};

use super::split::stratified_folds;
use super::{compute_metrics, EvalError, Metrics};

/// One rotation: train on everything outside `test`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified folds as train/test index pairs. Panics if any fold would
/// leak an index between its two sides or drop one.
pub fn kfold_plan(labels: &[u8], k: usize, seed: u64) -> Result<Vec<FoldPlan>, EvalError> {
    let folds = stratified_folds(labels, k, seed)?;
    let plans: Vec<FoldPlan> = folds
        .iter()
        .enumerate()
        .map(|(fold, test)| {
            let train = (0..labels.len()).filter(|i| test.binary_search(i).is_err()).collect();
            FoldPlan {
                fold,
                train,
                test: test.clone(),
            }
        })
        .collect();
    for p in &plans {
        assert!(
            p.train.iter().all(|i| p.test.binary_search(i).is_err()),
            "fold {} leaks a design between train and test",
            p.fold
        );
        assert_eq!(p.train.len() + p.test.len(), labels.len(), "fold {} drops designs", p.fold);
    }
    Ok(plans)
}

/// Runs `classify(plan)` on each fold, which returns predictions for
/// `plan.test` in order, and scores them.
pub fn kfold_evaluate<F>(labels: &[u8], k: usize, seed: u64, mut classify: F) -> Result<Vec<Metrics>, EvalError>
where
    F: FnMut(&FoldPlan) -> Result<Vec<u8>, EvalError>,
{
    kfold_plan(labels, k, seed)?
        .iter()
        .map(|plan| {
            let preds = classify(plan)?;
            let truth: Vec<u8> = plan.test.iter().map(|&i| labels[i]).collect();
            if preds.len() != truth.len() {
                return Err(EvalError::PredictionCount {
                    expected: truth.len(),
                    got: preds.len(),
                });
            }
            Ok(compute_metrics(&preds, &truth))
        })
        .collect()
}

/// How many folds contributed to each nullable mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefinedCounts {
    pub precision: usize,
    pub recall: usize,
    pub f1: usize,
}

/// Fold averages. Undefined precision, recall, or F1 values are skipped;
/// `defined` records how many folds each average covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub defined: DefinedCounts,
}

pub fn mean_metrics(folds: &[Metrics]) -> MeanMetrics {
    let n = folds.len().max(1) as f64;
    let avg = |f: &dyn Fn(&Metrics) -> f64| folds.iter().map(f).sum::<f64>() / n;
    let nullable = |f: &dyn Fn(&Metrics) -> Option<f64>| {
        let vals: Vec<f64> = folds.iter().filter_map(f).collect();
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        (mean, vals.len())
    };
    let (precision, np) = nullable(&|m| m.precision);
    let (recall, nr) = nullable(&|m| m.recall);
    let (f1, nf) = nullable(&|m| m.f1);
    MeanMetrics {
        tp: avg(&|m| m.tp as f64),
        fp: avg(&|m| m.fp as f64),
        tn: avg(&|m| m.tn as f64),
        fn_: avg(&|m| m.fn_ as f64),
        accuracy: avg(&|m| m.accuracy),
        precision,
        recall,
        f1,
        defined: DefinedCounts {
            precision: np,
            recall: nr,
            f1: nf,
        },
    }
}
