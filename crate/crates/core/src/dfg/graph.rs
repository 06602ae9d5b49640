use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DfgError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Signal,
    Constant,
    Operation,
    Branch,
    BranchCond,
    Concat,
    PartSelect,
    Input,
    Output,
}

impl NodeKind {
    pub const ALL: [NodeKind; 9] = [
        NodeKind::Signal,
        NodeKind::Constant,
        NodeKind::Operation,
        NodeKind::Branch,
        NodeKind::BranchCond,
        NodeKind::Concat,
        NodeKind::PartSelect,
        NodeKind::Input,
        NodeKind::Output,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Signal-like nodes are identified by name and never deduplicated.
    pub fn is_signal(self) -> bool {
        matches!(self, NodeKind::Signal | NodeKind::Input | NodeKind::Output)
    }

    /// Kinds whose label names an operator (structurally hashable nodes).
    pub fn is_operator(self) -> bool {
        matches!(
            self,
            NodeKind::Operation | NodeKind::Branch | NodeKind::BranchCond | NodeKind::Concat | NodeKind::PartSelect
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Signal => "Signal",
            NodeKind::Constant => "Constant",
            NodeKind::Operation => "Operation",
            NodeKind::Branch => "Branch",
            NodeKind::BranchCond => "BranchCond",
            NodeKind::Concat => "Concat",
            NodeKind::PartSelect => "PartSelect",
            NodeKind::Input => "Input",
            NodeKind::Output => "Output",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown node kind `{s}`"))
    }
}

// Field order is alphabetical so the serialized JSON is key-sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DfgNode {
    pub id: usize,
    pub kind: NodeKind,
    pub label: String,
}

/// Directed data-flow graph. Edges point from consumer to producer, i.e. from
/// output signals toward the inputs they depend on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub design: String,
    pub edges: Vec<(usize, usize)>,
    pub label: Option<u8>,
    pub nodes: Vec<DfgNode>,
}

impl CircuitGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn find_label(&self, label: &str) -> Option<&DfgNode> {
        self.nodes.iter().find(|n| n.label == label)
    }

    /// Out-neighbour lists in edge order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for &(s, d) in &self.edges {
            out[s].push(d);
        }
        out
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(_, d) in &self.edges {
            deg[d] += 1;
        }
        deg
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for &(s, _) in &self.edges {
            deg[s] += 1;
        }
        deg
    }

    /// Weakly-connected component id per node, numbered by first node.
    pub fn weak_components(&self) -> (usize, Vec<usize>) {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.edges {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut ids = vec![usize::MAX; n];
        let mut comp = vec![0; n];
        let mut next = 0;
        for v in 0..n {
            let r = find(&mut parent, v);
            if ids[r] == usize::MAX {
                ids[r] = next;
                next += 1;
            }
            comp[v] = ids[r];
        }
        (next, comp)
    }

    /// Checks structural invariants: contiguous ids, valid, unique,
    /// non-self edges, and unique signal labels.
    pub fn validate(&self) -> Result<(), DfgError> {
        let bad = |msg: String| Err(DfgError::InvalidGraph(msg));
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return bad(format!("node at position {i} has id {}", n.id));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &(s, d) in &self.edges {
            if s >= self.nodes.len() || d >= self.nodes.len() {
                return bad(format!("edge ({s}, {d}) out of range"));
            }
            if s == d {
                return bad(format!("self edge on node {s}"));
            }
            if !seen.insert((s, d)) {
                return bad(format!("duplicate edge ({s}, {d})"));
            }
        }
        let mut names = std::collections::HashSet::new();
        for n in self.nodes.iter().filter(|n| n.kind.is_signal()) {
            if !names.insert(n.label.as_str()) {
                return bad(format!("signal `{}` appears twice", n.label));
            }
        }
        Ok(())
    }

    /// Canonical JSON: key-sorted, compact, LF-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("graph serialization cannot fail");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, DfgError> {
        let g: CircuitGraph = serde_json::from_str(text).map_err(|e| DfgError::Json(e.to_string()))?;
        if let Some(l) = g.label {
            if l > 1 {
                return Err(DfgError::InvalidGraph(format!("label {l} is not 0 or 1")));
            }
        }
        g.validate()?;
        Ok(g)
    }

    /// Relabels nodes by `perm` (old id -> new id). Used for invariance checks.
    pub fn permuted(&self, perm: &[usize]) -> CircuitGraph {
        let mut nodes = self.nodes.clone();
        for n in nodes.iter_mut() {
            n.id = perm[n.id];
        }
        nodes.sort_by_key(|n| n.id);
        CircuitGraph {
            design: self.design.clone(),
            edges: self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect(),
            label: self.label,
            nodes,
        }
    }
}
