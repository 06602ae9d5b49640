//! Per-signal data-flow trees.
//!
//! Each assigned signal gets a tree rooted at the signal whose child is the
//! expression that drives it. Procedural code is executed symbolically: a
//! conditional assignment becomes a `Branch` node whose children are a
//! `BranchCond` (wrapping the condition), the value when the condition holds,
//! and the value otherwise. A signal left untouched on one path keeps its
//! previous value, which is the signal itself.

use std::collections::{BTreeMap, HashMap};

use super::graph::NodeKind;
use super::DfgError;
use crate::verilog::{BinaryOp, Expr, ExprKind, FlatDesign, Item, SignalKind, Stmt};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TreeNode {
    Signal(String),
    Constant(String),
    Op {
        kind: NodeKind,
        label: String,
        children: Vec<TreeNode>,
    },
}

impl TreeNode {
    fn op(kind: NodeKind, label: &str, children: Vec<TreeNode>) -> Self {
        TreeNode::Op {
            kind,
            label: label.to_string(),
            children,
        }
    }

    pub fn branch(cond: TreeNode, when_true: TreeNode, when_false: TreeNode) -> Self {
        TreeNode::op(
            NodeKind::Branch,
            "Branch",
            vec![
                TreeNode::op(NodeKind::BranchCond, "BranchCond", vec![cond]),
                when_true,
                when_false,
            ],
        )
    }

    /// Number of nodes in the tree, counting repeated subtrees each time.
    pub fn size(&self) -> usize {
        match self {
            TreeNode::Op { children, .. } => 1 + children.iter().map(TreeNode::size).sum::<usize>(),
            _ => 1,
        }
    }
}

/// Data-flow trees for one flat design, in first-assignment order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrees {
    pub design: String,
    /// Primary inputs in declaration order.
    pub inputs: Vec<String>,
    /// Primary outputs in declaration order.
    pub outputs: Vec<String>,
    pub trees: Vec<(String, TreeNode)>,
}

impl SignalTrees {
    pub fn get(&self, signal: &str) -> Option<&TreeNode> {
        self.trees.iter().find(|(s, _)| s == signal).map(|(_, t)| t)
    }
}

#[derive(Debug, Clone)]
struct Driver {
    tree: TreeNode,
    continuous: bool,
    full: bool,
}

pub fn build_signal_trees(design: &FlatDesign) -> Result<SignalTrees, DfgError> {
    let mut drivers: Vec<(String, Vec<Driver>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut push = |name: &str, d: Driver| -> Result<(), DfgError> {
        let i = *index.entry(name.to_string()).or_insert_with(|| {
            drivers.push((name.to_string(), Vec::new()));
            drivers.len() - 1
        });
        let list = &mut drivers[i].1;
        if d.continuous && d.full && list.iter().any(|x| x.continuous && x.full) {
            return Err(DfgError::MultipleContinuousDrivers(name.to_string()));
        }
        list.push(d);
        Ok(())
    };

    for item in &design.items {
        match item {
            Item::Assign(a) => {
                let tree = translate(&a.rhs, &HashMap::new());
                let full = a.lhs.as_ident().is_some();
                for target in a.lhs.lvalue_targets() {
                    push(
                        target,
                        Driver {
                            tree: tree.clone(),
                            continuous: true,
                            full,
                        },
                    )?;
                }
            }
            Item::Always(a) => {
                let mut state = ProcState::default();
                exec(&a.body, &mut state);
                for name in &state.order {
                    let tree = state.values[name].clone();
                    if tree == TreeNode::Signal(name.clone()) {
                        continue;
                    }
                    push(
                        name,
                        Driver {
                            tree,
                            continuous: false,
                            full: true,
                        },
                    )?;
                }
            }
            Item::Instance(_) => unreachable!("flat designs contain no instances"),
        }
    }

    let trees = drivers
        .into_iter()
        .map(|(name, mut ds)| {
            let tree = if ds.len() == 1 {
                ds.pop().unwrap().tree
            } else if ds.iter().all(|d| !d.continuous) {
                TreeNode::op(NodeKind::Branch, "Branch", ds.into_iter().map(|d| d.tree).collect())
            } else {
                TreeNode::op(NodeKind::Concat, "Merge", ds.into_iter().map(|d| d.tree).collect())
            };
            (name, tree)
        })
        .collect();

    let by_kind = |k: &[SignalKind]| -> Vec<String> {
        design
            .signals
            .iter()
            .filter(|s| k.contains(&s.kind))
            .map(|s| s.name.clone())
            .collect()
    };
    Ok(SignalTrees {
        design: design.name.clone(),
        inputs: by_kind(&[SignalKind::Input]),
        outputs: by_kind(&[SignalKind::Output, SignalKind::Inout]),
        trees,
    })
}

/// Converts an expression; identifiers with a blocking-assigned value in
/// `env` read that value instead of the signal.
pub fn translate(e: &Expr, env: &HashMap<String, TreeNode>) -> TreeNode {
    let t = |x: &Expr| translate(x, env);
    match &e.kind {
        ExprKind::Ident(n) => env.get(n).cloned().unwrap_or_else(|| TreeNode::Signal(n.clone())),
        ExprKind::Number(l) => TreeNode::Constant(l.text.clone()),
        ExprKind::Unary(op, x) => TreeNode::op(NodeKind::Operation, op.name(), vec![t(x)]),
        ExprKind::Binary(op, l, r) => TreeNode::op(NodeKind::Operation, op.name(), vec![t(l), t(r)]),
        ExprKind::Ternary(c, a, b) => TreeNode::branch(t(c), t(a), t(b)),
        ExprKind::Concat(parts) => TreeNode::op(NodeKind::Concat, "Concat", parts.iter().map(t).collect()),
        ExprKind::Repeat(n, parts) => {
            let mut children = vec![t(n)];
            children.extend(parts.iter().map(t));
            TreeNode::op(NodeKind::Concat, "Repeat", children)
        }
        ExprKind::Index(b, i) => TreeNode::op(NodeKind::PartSelect, "BitSelect", vec![t(b), t(i)]),
        ExprKind::Slice(b, m, l) => TreeNode::op(NodeKind::PartSelect, "PartSelect", vec![t(b), t(m), t(l)]),
    }
}

#[derive(Debug, Clone, Default)]
struct ProcState {
    /// Pending value per assigned signal.
    values: BTreeMap<String, TreeNode>,
    /// Signals in first-assignment order.
    order: Vec<String>,
    /// Values visible to later reads (blocking assignments only).
    env: HashMap<String, TreeNode>,
}

impl ProcState {
    fn current(&self, name: &str) -> TreeNode {
        self.values
            .get(name)
            .cloned()
            .unwrap_or_else(|| TreeNode::Signal(name.to_string()))
    }

    fn set(&mut self, name: &str, value: TreeNode, blocking: bool) {
        if !self.values.contains_key(name) {
            self.order.push(name.to_string());
        }
        if blocking {
            self.env.insert(name.to_string(), value.clone());
        }
        self.values.insert(name.to_string(), value);
    }
}

fn exec(stmt: &Stmt, state: &mut ProcState) {
    match stmt {
        Stmt::Null => {}
        Stmt::Block(stmts) => stmts.iter().for_each(|s| exec(s, state)),
        Stmt::Assign {
            lhs, rhs, blocking, ..
        } => {
            let value = translate(rhs, &state.env);
            let partial = lhs.as_ident().is_none() && !matches!(lhs.kind, ExprKind::Concat(_));
            for target in lhs.lvalue_targets() {
                let v = if partial {
                    TreeNode::op(NodeKind::Concat, "Merge", vec![state.current(target), value.clone()])
                } else {
                    value.clone()
                };
                state.set(target, v, *blocking);
            }
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            let c = translate(cond, &state.env);
            conditional(state, c, |s| exec(then_branch, s), |s| {
                if let Some(e) = else_branch {
                    exec(e, s)
                }
            });
        }
        Stmt::Case {
            subject,
            arms,
            default,
            ..
        } => case_chain(state, subject, arms, default.as_deref()),
    }
}

fn case_chain(state: &mut ProcState, subject: &Expr, arms: &[crate::verilog::CaseArm], default: Option<&Stmt>) {
    let Some((arm, rest)) = arms.split_first() else {
        if let Some(d) = default {
            exec(d, state);
        }
        return;
    };
    let conds: Vec<TreeNode> = arm
        .labels
        .iter()
        .map(|l| {
            TreeNode::op(
                NodeKind::Operation,
                BinaryOp::Eq.name(),
                vec![translate(subject, &state.env), translate(l, &state.env)],
            )
        })
        .collect();
    let cond = conds
        .into_iter()
        .reduce(|a, b| TreeNode::op(NodeKind::Operation, BinaryOp::LogicOr.name(), vec![a, b]))
        .expect("case arm has at least one label");
    conditional(state, cond, |s| exec(&arm.body, s), |s| case_chain(s, subject, rest, default));
}

fn conditional(
    state: &mut ProcState,
    cond: TreeNode,
    then_f: impl FnOnce(&mut ProcState),
    else_f: impl FnOnce(&mut ProcState),
) {
    let mut a = state.clone();
    then_f(&mut a);
    let mut b = state.clone();
    else_f(&mut b);

    let mut names: Vec<String> = Vec::new();
    for n in a.order.iter().chain(b.order.iter()) {
        if !names.contains(n) {
            names.push(n.clone());
        }
    }
    for name in names {
        let va = a.current(&name);
        let vb = b.current(&name);
        let before = state.current(&name);
        if va == before && vb == before {
            continue;
        }
        let merged = if va == vb {
            va
        } else {
            TreeNode::branch(cond.clone(), va, vb)
        };
        let blocking = a.env.contains_key(&name) || b.env.contains_key(&name);
        state.set(&name, merged, blocking);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verilog::{elaborate, SourceUnit};

    fn trees(src: &str, top: &str) -> Result<SignalTrees, DfgError> {
        build_signal_trees(&elaborate(&SourceUnit::single("t.v", src, top)).unwrap())
    }

    fn sig(n: &str) -> TreeNode {
        TreeNode::Signal(n.into())
    }

    fn op(label: &str, children: Vec<TreeNode>) -> TreeNode {
        TreeNode::op(NodeKind::Operation, label, children)
    }

    #[test]
    fn inverter_tree() {
        let t = trees("module inv(input a, output b); assign b = ~a; endmodule", "inv").unwrap();
        assert_eq!(t.get("b"), Some(&op("Unot", vec![sig("a")])));
    }

    #[test]
    fn clocked_enable_register() {
        let t = trees(
            "module r(input clk, input en, input d, output reg q); always @(posedge clk) if (en) q <= d; endmodule",
            "r",
        )
        .unwrap();
        assert_eq!(t.get("q"), Some(&TreeNode::branch(sig("en"), sig("d"), sig("q"))));
    }

    #[test]
    fn full_adder_trees() {
        let t = trees(crate::fixtures::FULL_ADDER, "full_adder").unwrap();
        assert_eq!(
            t.get("sum"),
            Some(&op("Xor", vec![op("Xor", vec![sig("a"), sig("b")]), sig("cin")]))
        );
        assert_eq!(
            t.get("cout"),
            Some(&op(
                "Or",
                vec![
                    op("And", vec![sig("a"), sig("b")]),
                    op("And", vec![sig("cin"), op("Xor", vec![sig("a"), sig("b")])])
                ]
            ))
        );
    }

    #[test]
    fn blocking_reads_see_updates() {
        let t = trees(
            "module m(input a, input b, output reg y); reg t; always @* begin t = a & b; y = ~t; end endmodule",
            "m",
        )
        .unwrap();
        assert_eq!(t.get("y"), Some(&op("Unot", vec![op("And", vec![sig("a"), sig("b")])])));
    }

    #[test]
    fn case_becomes_branch_chain() {
        let t = trees(
            "module m(input [1:0] s, input a, input b, output reg y); always @* case (s) 2'd0: y = a; default: y = b; endcase endmodule",
            "m",
        )
        .unwrap();
        let cond = op("Eq", vec![sig("s"), TreeNode::Constant("2'd0".into())]);
        assert_eq!(t.get("y"), Some(&TreeNode::branch(cond, sig("a"), sig("b"))));
    }

    #[test]
    fn duplicate_continuous_driver_rejected() {
        assert_eq!(
            trees("module m(input a, output y); assign y = a; assign y = ~a; endmodule", "m"),
            Err(DfgError::MultipleContinuousDrivers("y".into()))
        );
        // Disjoint part drivers are fine.
        assert!(trees(
            "module m(input a, output [1:0] y); assign y[0] = a; assign y[1] = ~a; endmodule",
            "m"
        )
        .is_ok());
    }

    #[test]
    fn procedural_drivers_merge_under_branch() {
        let t = trees(
            "module m(input clk, input a, input b, output reg y); always @(posedge clk) y <= a; always @(posedge clk) y <= b; endmodule",
            "m",
        )
        .unwrap();
        assert_eq!(
            t.get("y"),
            Some(&TreeNode::op(NodeKind::Branch, "Branch", vec![sig("a"), sig("b")]))
        );
    }
}
