//! Graph inputs and block-diagonal batches.

use super::tensor::{Real, Tensor};
use super::GnnError;
use crate::dfg::{encode_features, CircuitGraph, Vocabulary};

/// One graph ready for the network: node features plus directed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub design: String,
    pub features: Tensor<f32>,
    pub edges: Vec<(usize, usize)>,
}

impl GraphInput {
    pub fn new(design: impl Into<String>, features: Tensor<f32>, edges: Vec<(usize, usize)>) -> Result<Self, GnnError> {
        let n = features.rows();
        if features.shape().len() != 2 || n == 0 {
            return Err(GnnError::ShapeMismatch(format!(
                "features must be a non-empty matrix, got {:?}",
                features.shape()
            )));
        }
        if let Some(&(s, d)) = edges.iter().find(|&&(s, d)| s >= n || d >= n) {
            return Err(GnnError::ShapeMismatch(format!("edge ({s},{d}) out of range for {n} nodes")));
        }
        Ok(GraphInput {
            design: design.into(),
            features,
            edges,
        })
    }

    pub fn from_graph(g: &CircuitGraph, vocab: &Vocabulary) -> Self {
        let f = encode_features(g, vocab);
        GraphInput {
            design: g.design.clone(),
            features: Tensor::from_vec(&[f.rows, f.dim], f.data).expect("feature matrix is consistent"),
            edges: g.edges.clone(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }
}

/// Several graphs stacked block-diagonally. Node `v` of graph `g` has the
/// global index `offsets[g] + v`; edges and neighbor lists never cross
/// graph boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch<T = f32> {
    pub features: Tensor<T>,
    /// Graph boundaries, `len = graphs + 1`.
    pub offsets: Vec<usize>,
    /// Directed edges, global indices.
    pub edges: Vec<(usize, usize)>,
    /// Symmetrized neighbors without self, sorted.
    pub neighbors: Vec<Vec<usize>>,
    /// Rows of D^-1/2 (A_sym + I) D^-1/2 as sorted `(column, value)` lists;
    /// columns are exactly the neighbors plus the node itself.
    pub norm_adj: Vec<Vec<(usize, T)>>,
}

impl<T: Real> GraphBatch<T> {
    pub fn from_inputs(inputs: &[&GraphInput]) -> Result<Self, GnnError> {
        if inputs.is_empty() {
            return Err(GnnError::ShapeMismatch("empty batch".into()));
        }
        let dim = inputs[0].features.cols();
        let mut offsets = vec![0];
        let mut data = Vec::new();
        let mut edges = Vec::new();
        for g in inputs {
            if g.features.cols() != dim {
                return Err(GnnError::ShapeMismatch(format!(
                    "feature width {} differs from {dim} in `{}`",
                    g.features.cols(),
                    g.design
                )));
            }
            let base = *offsets.last().unwrap();
            data.extend(g.features.data().iter().map(|&v| T::from_f32(v)));
            edges.extend(g.edges.iter().map(|&(s, d)| (s + base, d + base)));
            offsets.push(base + g.num_nodes());
        }
        let n = *offsets.last().unwrap();
        Self::from_parts(Tensor::from_vec(&[n, dim], data)?, offsets, edges)
    }

    pub fn from_parts(features: Tensor<T>, offsets: Vec<usize>, edges: Vec<(usize, usize)>) -> Result<Self, GnnError> {
        let n = features.rows();
        if offsets.first() != Some(&0) || offsets.last() != Some(&n) || offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GnnError::ShapeMismatch(format!("bad graph offsets {offsets:?} for {n} nodes")));
        }
        let graph_of = graph_index(&offsets);
        let mut neighbors = vec![Vec::new(); n];
        for &(s, d) in &edges {
            if s >= n || d >= n || graph_of[s] != graph_of[d] {
                return Err(GnnError::ShapeMismatch(format!("edge ({s},{d}) leaves its graph")));
            }
            if s != d {
                neighbors[s].push(d);
                neighbors[d].push(s);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        let deg: Vec<T> = neighbors.iter().map(|l| T::from_f64((l.len() + 1) as f64)).collect();
        let norm_adj = neighbors
            .iter()
            .enumerate()
            .map(|(v, list)| {
                let mut row: Vec<(usize, T)> = list
                    .iter()
                    .chain(std::iter::once(&v))
                    .map(|&u| (u, T::one() / (deg[v] * deg[u]).sqrt()))
                    .collect();
                row.sort_unstable_by_key(|&(u, _)| u);
                row
            })
            .collect();
        Ok(GraphBatch {
            features,
            offsets,
            edges,
            neighbors,
            norm_adj,
        })
    }

    pub fn num_graphs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn graph_range(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }

    /// Same structure with different node features.
    pub fn with_features(&self, features: Tensor<T>) -> Result<Self, GnnError> {
        if features.rows() != self.num_nodes() {
            return Err(GnnError::ShapeMismatch(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        Ok(GraphBatch {
            features,
            ..self.clone()
        })
    }

    /// Subgraph induced by `kept` (global ids, grouped by graph, every graph
    /// keeping at least one node), renormalized, with the given features.
    pub fn induced(&self, kept: &[usize], features: Tensor<T>) -> Result<Self, GnnError> {
        let mut new_id = vec![usize::MAX; self.num_nodes()];
        for (i, &v) in kept.iter().enumerate() {
            new_id[v] = i;
        }
        let graph_of = graph_index(&self.offsets);
        let mut offsets = vec![0];
        for g in 0..self.num_graphs() {
            let count = kept.iter().filter(|&&v| graph_of[v] == g).count();
            offsets.push(offsets[g] + count);
        }
        let edges = self
            .edges
            .iter()
            .filter(|&&(s, d)| new_id[s] != usize::MAX && new_id[d] != usize::MAX)
            .map(|&(s, d)| (new_id[s], new_id[d]))
            .collect();
        Self::from_parts(features, offsets, edges)
    }

    pub fn cast<U: Real>(&self) -> GraphBatch<U> {
        GraphBatch {
            features: self.features.cast(),
            offsets: self.offsets.clone(),
            edges: self.edges.clone(),
            neighbors: self.neighbors.clone(),
            norm_adj: self
                .norm_adj
                .iter()
                .map(|row| row.iter().map(|&(u, w)| (u, U::from_f64(w.to_f64()))).collect())
                .collect(),
        }
    }

    /// `Â · x`; Â is symmetric, so this also serves the backward pass.
    pub fn propagate(&self, x: &Tensor<T>) -> Tensor<T> {
        self.gather(x, self.norm_adj.iter().map(|row| row.iter().map(|&(u, w)| (u, w.to_f64()))))
    }

    /// Sum over symmetrized neighbors, self excluded. Symmetric as well.
    pub fn neighbor_sum(&self, x: &Tensor<T>) -> Tensor<T> {
        self.gather(x, self.neighbors.iter().map(|list| list.iter().map(|&u| (u, 1.0))))
    }

    /// Row `v` of the result is `Σ w · x[u]` over `rows[v]`. Accumulates in
    /// f64 so that f32 results do not depend on the neighbor order.
    fn gather<R, I>(&self, x: &Tensor<T>, rows: R) -> Tensor<T>
    where
        R: Iterator<Item = I>,
        I: Iterator<Item = (usize, f64)>,
    {
        let c = x.cols();
        let mut out = Tensor::zeros(&[x.rows(), c]);
        let mut acc = vec![0.0f64; c];
        for (v, row) in rows.enumerate() {
            acc.fill(0.0);
            for (u, w) in row {
                for (a, &s) in acc.iter_mut().zip(x.row(u)) {
                    *a += w * s.to_f64();
                }
            }
            for (o, &a) in out.row_mut(v).iter_mut().zip(&acc) {
                *o = T::from_f64(a);
            }
        }
        out
    }
}

fn graph_index(offsets: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(*offsets.last().unwrap_or(&0));
    for (g, w) in offsets.windows(2).enumerate() {
        out.extend(std::iter::repeat(g).take(w[1] - w[0]));
    }
    out
}
