//! Node feature encoding.
//!
//! Each row is `[kind one-hot | operator one-hot + OOV | 1/(1+in) | 1/(1+out)]`.
//! Signal, input, output, and constant nodes carry no operator and set the
//! OOV slot.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::graph::{CircuitGraph, NodeKind};
use super::DfgError;
use crate::verilog::{BinaryOp, UnaryOp};

/// Ordered operator vocabulary; position is significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    operators: Vec<String>,
}

impl Vocabulary {
    pub fn new(operators: Vec<String>) -> Self {
        Vocabulary { operators }
    }

    /// Sorted set of operator labels that occur in `graphs`.
    pub fn from_graphs<'a>(graphs: impl IntoIterator<Item = &'a CircuitGraph>) -> Self {
        let set: BTreeSet<&str> = graphs
            .into_iter()
            .flat_map(|g| g.nodes.iter())
            .filter(|n| n.kind.is_operator())
            .map(|n| n.label.as_str())
            .collect();
        Vocabulary {
            operators: set.into_iter().map(str::to_string).collect(),
        }
    }

    /// Every operator label the graph builder can emit.
    pub fn standard() -> Self {
        let mut ops: Vec<String> = UnaryOp::ALL.iter().map(|o| o.name().to_string()).collect();
        ops.extend(BinaryOp::ALL.iter().map(|o| o.name().to_string()));
        ops.extend(
            ["Branch", "BranchCond", "Concat", "Repeat", "Merge", "BitSelect", "PartSelect"]
                .iter()
                .map(|s| s.to_string()),
        );
        Vocabulary { operators: ops }
    }

    pub fn operators(&self) -> &[String] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// Width of the encoded rows.
    pub fn feature_dim(&self) -> usize {
        NodeKind::ALL.len() + self.operators.len() + 1 + 2
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("vocabulary serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DfgError> {
        serde_json::from_str(text).map_err(|e| DfgError::Json(e.to_string()))
    }

    fn slot(&self, label: &str) -> usize {
        self.operators
            .iter()
            .position(|o| o == label)
            .unwrap_or(self.operators.len())
    }
}

/// Row-major node features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

pub fn encode_features(g: &CircuitGraph, vocab: &Vocabulary) -> FeatureMatrix {
    let dim = vocab.feature_dim();
    let kinds = NodeKind::ALL.len();
    let op_base = kinds;
    let deg_base = kinds + vocab.len() + 1;
    let indeg = g.in_degrees();
    let outdeg = g.out_degrees();
    let mut data = vec![0.0f32; g.nodes.len() * dim];
    for (i, node) in g.nodes.iter().enumerate() {
        let row = &mut data[i * dim..(i + 1) * dim];
        row[node.kind.index()] = 1.0;
        let slot = if node.kind.is_operator() {
            vocab.slot(&node.label)
        } else {
            vocab.len()
        };
        row[op_base + slot] = 1.0;
        row[deg_base] = 1.0 / (1.0 + indeg[i] as f32);
        row[deg_base + 1] = 1.0 / (1.0 + outdeg[i] as f32);
    }
    FeatureMatrix {
        rows: g.nodes.len(),
        dim,
        data,
    }
}
