//! Data-flow graph extraction.
//!
//! A flat design becomes one tree per assigned signal ([`build_signal_trees`]);
//! the trees are merged on shared signal names and trimmed to a single
//! weakly-connected graph ([`merge_and_trim`]), and each node is encoded as a
//! feature row ([`encode_features`]).

mod build;
mod features;
mod graph;
mod merge;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use build::{build_signal_trees, translate, SignalTrees, TreeNode};
pub use features::{encode_features, FeatureMatrix, Vocabulary};
pub use graph::{CircuitGraph, DfgNode, NodeKind};
pub use merge::{merge_and_trim, normalize};

use crate::verilog::{self, FlatDesign, FrontendError, SourceUnit};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DfgError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("signal `{0}` has more than one continuous driver")]
    MultipleContinuousDrivers(String),
    #[error("design `{0}` has no logic reachable from a primary output")]
    EmptyGraph(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("malformed JSON: {0}")]
    Json(String),
}

/// Size and extraction time of one graph, mirroring a per-design stats table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub design: String,
    pub nodes: usize,
    pub edges: usize,
    pub seconds: f64,
}

pub fn graph_stats(g: &CircuitGraph, seconds: f64) -> GraphStats {
    GraphStats {
        design: g.design.clone(),
        nodes: g.node_count(),
        edges: g.edge_count(),
        seconds,
    }
}

pub fn build_graph(design: &FlatDesign) -> Result<CircuitGraph, DfgError> {
    merge_and_trim(&build_signal_trees(design)?)
}

/// Parse, flatten, and build the graph for one design, timing the whole run.
pub fn extract(src: &SourceUnit) -> Result<(CircuitGraph, GraphStats), DfgError> {
    let start = Instant::now();
    let flat = verilog::elaborate(src)?;
    let g = build_graph(&flat)?;
    let stats = graph_stats(&g, start.elapsed().as_secs_f64());
    Ok((g, stats))
}
