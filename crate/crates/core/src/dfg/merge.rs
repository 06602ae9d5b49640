//! Merging signal trees into one circuit graph, then trimming.

use std::collections::HashMap;

use super::build::{SignalTrees, TreeNode};
use super::graph::{CircuitGraph, DfgNode, NodeKind};
use super::DfgError;

pub fn merge_and_trim(trees: &SignalTrees) -> Result<CircuitGraph, DfgError> {
    if trees.trees.is_empty() {
        return Err(DfgError::EmptyGraph(trees.design.clone()));
    }
    let mut b = RawBuilder::default();
    // Outputs first, in declaration order; canonical numbering relies on it.
    for o in &trees.outputs {
        b.signal(o, NodeKind::Output);
    }
    for i in &trees.inputs {
        b.signal(i, NodeKind::Input);
    }
    let kind_of = |name: &str| {
        if trees.outputs.iter().any(|o| o == name) {
            NodeKind::Output
        } else if trees.inputs.iter().any(|i| i == name) {
            NodeKind::Input
        } else {
            NodeKind::Signal
        }
    };
    for (name, tree) in &trees.trees {
        let root = b.signal(name, kind_of(name));
        let mut constants = HashMap::new();
        let child = b.add_tree(tree, &kind_of, &mut constants);
        b.edge(root, child);
    }
    let raw = CircuitGraph {
        design: trees.design.clone(),
        edges: b.edges,
        label: None,
        nodes: b.nodes,
    };
    normalize(&raw)
}

#[derive(Default)]
struct RawBuilder {
    nodes: Vec<DfgNode>,
    edges: Vec<(usize, usize)>,
    edge_set: std::collections::HashSet<(usize, usize)>,
    signals: HashMap<String, usize>,
}

impl RawBuilder {
    fn node(&mut self, kind: NodeKind, label: &str) -> usize {
        let id = self.nodes.len();
        self.nodes.push(DfgNode {
            id,
            kind,
            label: label.to_string(),
        });
        id
    }

    fn signal(&mut self, name: &str, kind: NodeKind) -> usize {
        if let Some(&id) = self.signals.get(name) {
            return id;
        }
        let id = self.node(kind, name);
        self.signals.insert(name.to_string(), id);
        id
    }

    fn edge(&mut self, from: usize, to: usize) {
        if from != to && self.edge_set.insert((from, to)) {
            self.edges.push((from, to));
        }
    }

    fn add_tree(
        &mut self,
        t: &TreeNode,
        kind_of: &impl Fn(&str) -> NodeKind,
        constants: &mut HashMap<String, usize>,
    ) -> usize {
        match t {
            TreeNode::Signal(n) => self.signal(n, kind_of(n)),
            TreeNode::Constant(text) => {
                if let Some(&id) = constants.get(text) {
                    return id;
                }
                let id = self.node(NodeKind::Constant, text);
                constants.insert(text.clone(), id);
                id
            }
            TreeNode::Op { kind, label, children } => {
                let id = self.node(*kind, label);
                for c in children {
                    let cid = self.add_tree(c, kind_of, constants);
                    self.edge(id, cid);
                }
                id
            }
        }
    }
}

/// Trims components, deduplicates structurally identical operator nodes,
/// and renumbers canonically. Idempotent.
pub fn normalize(g: &CircuitGraph) -> Result<CircuitGraph, DfgError> {
    let keep = kept_component(g).ok_or_else(|| DfgError::EmptyGraph(g.design.clone()))?;
    let children = g.children();

    // Structural hashing to a fixpoint: operator nodes with equal
    // (kind, label, canonical children) collapse onto the smallest id.
    let n = g.nodes.len();
    let mut rep: Vec<usize> = (0..n).collect();
    loop {
        let mut table: HashMap<(NodeKind, &str, Vec<usize>), usize> = HashMap::new();
        let mut changed = false;
        for v in 0..n {
            if !keep[v] || !g.nodes[v].kind.is_operator() || rep[v] != v {
                continue;
            }
            let key = (
                g.nodes[v].kind,
                g.nodes[v].label.as_str(),
                children[v].iter().map(|&c| root(&rep, c)).collect::<Vec<_>>(),
            );
            match table.get(&key) {
                Some(&first) => {
                    rep[v] = first;
                    changed = true;
                }
                None => {
                    table.insert(key, v);
                }
            }
        }
        if !changed {
            break;
        }
    }
    for v in 0..n {
        rep[v] = root(&rep, v);
    }

    // Canonical numbering: depth-first pre-order from outputs (by current
    // id), then from the remaining kept nodes.
    let mut order: Vec<usize> = Vec::new();
    let mut new_id = vec![usize::MAX; n];
    let visit_from = |start: usize, order: &mut Vec<usize>, new_id: &mut Vec<usize>| {
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if new_id[v] != usize::MAX {
                continue;
            }
            new_id[v] = order.len();
            order.push(v);
            for &c in children[v].iter().rev() {
                let c = rep[c];
                if new_id[c] == usize::MAX {
                    stack.push(c);
                }
            }
        }
    };
    let roots = (0..n)
        .filter(|&v| keep[v] && rep[v] == v && g.nodes[v].kind == NodeKind::Output)
        .chain((0..n).filter(|&v| keep[v] && rep[v] == v));
    for v in roots.collect::<Vec<_>>() {
        visit_from(v, &mut order, &mut new_id);
    }

    let nodes: Vec<DfgNode> = order
        .iter()
        .enumerate()
        .map(|(i, &v)| DfgNode {
            id: i,
            kind: g.nodes[v].kind,
            label: g.nodes[v].label.clone(),
        })
        .collect();
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for &v in &order {
        for &c in &children[v] {
            let e = (new_id[v], new_id[rep[c]]);
            if e.0 != e.1 && seen.insert(e) {
                edges.push(e);
            }
        }
    }
    Ok(CircuitGraph {
        design: g.design.clone(),
        edges,
        label: g.label,
        nodes,
    })
}

fn root(rep: &[usize], mut x: usize) -> usize {
    while rep[x] != x {
        x = rep[x];
    }
    x
}

/// Marks the nodes of the weakly-connected component that is kept: among
/// components containing a primary output, the largest one (ties go to the
/// component holding the lowest-numbered output).
fn kept_component(g: &CircuitGraph) -> Option<Vec<bool>> {
    let (count, comp) = g.weak_components();
    let mut sizes = vec![0usize; count];
    let mut has_output = vec![false; count];
    let mut first_output = vec![usize::MAX; count];
    for (v, node) in g.nodes.iter().enumerate() {
        sizes[comp[v]] += 1;
        if node.kind == NodeKind::Output {
            has_output[comp[v]] = true;
            first_output[comp[v]] = first_output[comp[v]].min(v);
        }
    }
    let best = (0..count)
        .filter(|&c| has_output[c] && sizes[c] > 1)
        .min_by_key(|&c| (std::cmp::Reverse(sizes[c]), first_output[c]))?;
    Some(comp.iter().map(|&c| c == best).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::build_signal_trees;
    use crate::verilog::{elaborate, SourceUnit};

    fn graph(src: &str, top: &str) -> Result<CircuitGraph, DfgError> {
        let flat = elaborate(&SourceUnit::single("t.v", src, top)).unwrap();
        merge_and_trim(&build_signal_trees(&flat)?)
    }

    #[test]
    fn shared_signal_is_one_node() {
        let g = graph(
            "module m(input a, input b, output x, output y); assign x = a & b; assign y = a | b; endmodule",
            "m",
        )
        .unwrap();
        assert_eq!(g.nodes.iter().filter(|n| n.label == "a").count(), 1);
        g.validate().unwrap();
    }

    #[test]
    fn dangling_subtree_is_trimmed() {
        let g = graph(
            "module m(input a, input c, input d, output y); wire u; assign u = c & d; assign y = ~a; endmodule",
            "m",
        )
        .unwrap();
        assert!(g.find_label("u").is_none());
        assert!(g.find_label("c").is_none());
        assert_eq!(g.node_count(), 3);
    }

    #[test]
    fn identical_operations_are_deduplicated() {
        let g = graph(
            "module m(input a, input b, output x, output y); assign x = ~(a & b); assign y = (a & b) | a; endmodule",
            "m",
        )
        .unwrap();
        assert_eq!(g.nodes.iter().filter(|n| n.label == "And").count(), 1);
    }

    #[test]
    fn constants_shared_within_a_tree_only() {
        let g = graph(
            "module m(input [3:0] a, output [3:0] x, output [3:0] y); assign x = (a + 4'd1) ^ 4'd1; assign y = a - 4'd1; endmodule",
            "m",
        )
        .unwrap();
        assert_eq!(g.nodes.iter().filter(|n| n.label == "4'd1").count(), 2);
    }

    #[test]
    fn no_outputs_is_empty_graph() {
        assert!(matches!(
            graph("module m(input a); wire w; assign w = ~a; endmodule", "m"),
            Err(DfgError::EmptyGraph(_))
        ));
    }

    #[test]
    fn feedback_cycle_is_kept() {
        let g = graph(
            "module m(input clk, input en, output reg [3:0] q); always @(posedge clk) if (en) q <= q + 4'd1; endmodule",
            "m",
        )
        .unwrap();
        let q = g.find_label("q").unwrap().id;
        let plus = g.find_label("Plus").unwrap().id;
        assert!(g.edges.contains(&(plus, q)));
    }
}
