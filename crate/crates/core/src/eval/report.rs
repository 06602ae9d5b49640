//! JSON and CSV evaluation reports.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::kfold::{mean_metrics, MeanMetrics};
use super::Metrics;
use crate::gnn::GnnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Holdout,
    Kfold,
}

/// Fold metrics of the 4-bit model evaluated alongside the f32 one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantRows {
    pub folds: Vec<Metrics>,
    pub mean: MeanMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: Mode,
    pub folds: Vec<Metrics>,
    pub mean: MeanMetrics,
    pub config: GnnConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q4: Option<QuantRows>,
}

impl Report {
    pub fn new(mode: Mode, folds: Vec<Metrics>, config: GnnConfig, seed: u64) -> Self {
        Report {
            mode,
            mean: mean_metrics(&folds),
            folds,
            config,
            seed,
            q4: None,
        }
    }

    pub fn with_q4(mut self, folds: Vec<Metrics>) -> Self {
        self.q4 = Some(QuantRows {
            mean: mean_metrics(&folds),
            folds,
        });
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }

    /// `metric,arch,layers,value` rows of the mean metrics; the 4-bit model
    /// appears as arch `<ARCH>-q4`. Undefined values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,arch,layers,value\n");
        let layers = self.config.num_layers;
        let mut rows = |arch: String, m: &MeanMetrics| {
            for (name, v) in [
                ("accuracy", Some(m.accuracy)),
                ("precision", m.precision),
                ("recall", m.recall),
                ("f1", m.f1),
            ] {
                let v = v.map(|v| format!("{v:.6}")).unwrap_or_default();
                writeln!(out, "{name},{arch},{layers},{v}").unwrap();
            }
        };
        rows(self.config.arch.to_string(), &self.mean);
        if let Some(q) = &self.q4 {
            rows(format!("{}-q4", self.config.arch), &q.mean);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_shape() {
        let r = Report::new(Mode::Kfold, vec![Metrics::from_counts(9, 0, 2, 0)], GnnConfig::default(), 42);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["mode"], "kfold");
        assert_eq!(v["seed"], 42);
        assert_eq!(v["folds"][0]["fn"], 0);
        assert_eq!(v["mean"]["precision"], 1.0);
        assert_eq!(v["config"]["arch"], "GCN");
        assert!(v.get("q4").is_none());
        assert_eq!(serde_json::from_str::<Report>(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn csv_rows() {
        let folds = vec![Metrics::from_counts(0, 0, 2, 1)];
        let r = Report::new(Mode::Holdout, folds.clone(), GnnConfig::default(), 1).with_q4(folds);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "metric,arch,layers,value");
        assert_eq!(lines[1], "accuracy,GCN,2,0.666667");
        assert_eq!(lines[2], "precision,GCN,2,");
        assert_eq!(lines[5], "accuracy,GCN-q4,2,0.666667");
        assert_eq!(lines.len(), 9);
    }
}
