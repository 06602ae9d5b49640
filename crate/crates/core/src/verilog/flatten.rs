//! Hierarchy elaboration: inlines every instance into one flat module.

use std::collections::HashMap;

use super::ast::*;
use super::error::{FrontendError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Input,
    Output,
    Inout,
    Wire,
    Reg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlatSignal {
    /// Hierarchical name, e.g. `cpu.alu.sum`.
    pub name: String,
    pub kind: SignalKind,
    pub msb: i64,
    pub lsb: i64,
}

impl FlatSignal {
    pub fn width(&self) -> u32 {
        (self.msb - self.lsb).unsigned_abs() as u32 + 1
    }
}

/// A single elaborated module with no instantiations and no parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatDesign {
    pub name: String,
    pub signals: Vec<FlatSignal>,
    /// Continuous assigns and always blocks; never `Item::Instance`.
    pub items: Vec<Item>,
}

impl FlatDesign {
    pub fn signal(&self, name: &str) -> Option<&FlatSignal> {
        self.signals.iter().find(|s| s.name == name)
    }

    pub fn outputs(&self) -> impl Iterator<Item = &FlatSignal> {
        self.signals
            .iter()
            .filter(|s| matches!(s.kind, SignalKind::Output | SignalKind::Inout))
    }
}

pub fn flatten(ast: &Ast, top: &str) -> Result<FlatDesign> {
    let module = ast
        .module(top)
        .ok_or_else(|| FrontendError::UnknownModule(top.to_string()))?;
    let mut out = FlatDesign {
        name: top.to_string(),
        signals: Vec::new(),
        items: Vec::new(),
    };
    let mut stack = vec![top.to_string()];
    Elaborator { ast, out: &mut out }.inline(module, "", &HashMap::new(), &mut stack, true)?;
    Ok(out)
}

/// Evaluates a constant expression against resolved parameter values.
pub fn eval_const(e: &Expr, env: &HashMap<String, i64>) -> Option<i64> {
    Some(match &e.kind {
        ExprKind::Number(l) => l.value? as i64,
        ExprKind::Ident(n) => *env.get(n)?,
        ExprKind::Unary(op, x) => {
            let v = eval_const(x, env)?;
            match op {
                UnaryOp::Neg => v.wrapping_neg(),
                UnaryOp::Plus => v,
                UnaryOp::Not => !v,
                UnaryOp::LogicNot => (v == 0) as i64,
                _ => return None,
            }
        }
        ExprKind::Binary(op, l, r) => {
            let a = eval_const(l, env)?;
            let b = eval_const(r, env)?;
            match op {
                BinaryOp::Add => a.wrapping_add(b),
                BinaryOp::Sub => a.wrapping_sub(b),
                BinaryOp::Mul => a.wrapping_mul(b),
                BinaryOp::Div => a.checked_div(b)?,
                BinaryOp::Mod => a.checked_rem(b)?,
                BinaryOp::Shl | BinaryOp::AShl => a.checked_shl(u32::try_from(b).ok()?)?,
                BinaryOp::Shr | BinaryOp::AShr => a.checked_shr(u32::try_from(b).ok()?)?,
                BinaryOp::Lt => (a < b) as i64,
                BinaryOp::Gt => (a > b) as i64,
                BinaryOp::Le => (a <= b) as i64,
                BinaryOp::Ge => (a >= b) as i64,
                BinaryOp::Eq | BinaryOp::CaseEq => (a == b) as i64,
                BinaryOp::Ne | BinaryOp::CaseNe => (a != b) as i64,
                BinaryOp::And => a & b,
                BinaryOp::Or => a | b,
                BinaryOp::Xor => a ^ b,
                BinaryOp::Xnor => !(a ^ b),
                BinaryOp::LogicAnd => (a != 0 && b != 0) as i64,
                BinaryOp::LogicOr => (a != 0 || b != 0) as i64,
            }
        }
        ExprKind::Ternary(c, t, f) => {
            if eval_const(c, env)? != 0 {
                eval_const(t, env)?
            } else {
                eval_const(f, env)?
            }
        }
        _ => return None,
    })
}

struct Elaborator<'a> {
    ast: &'a Ast,
    out: &'a mut FlatDesign,
}

/// Values substituted for parameter references inside item expressions.
struct Scope {
    prefix: String,
    values: HashMap<String, i64>,
    literals: HashMap<String, Literal>,
}

impl Scope {
    fn substitute(&self, e: &Expr) -> Expr {
        let mut e = e.clone();
        e.walk_mut(&mut |sub| {
            if let ExprKind::Ident(n) = &sub.kind {
                if let Some(lit) = self.literals.get(n) {
                    sub.kind = ExprKind::Number(lit.clone());
                } else {
                    sub.kind = ExprKind::Ident(format!("{}{}", self.prefix, n));
                }
            }
        });
        e
    }

    fn substitute_stmt(&self, s: &Stmt) -> Stmt {
        let mut s = s.clone();
        s.exprs_mut(&mut |e, _| *e = self.substitute(e));
        s
    }
}

impl<'a> Elaborator<'a> {
    fn inline(
        &mut self,
        module: &ModuleDecl,
        prefix: &str,
        overrides: &HashMap<String, i64>,
        stack: &mut Vec<String>,
        is_top: bool,
    ) -> Result<()> {
        let mut scope = Scope {
            prefix: prefix.to_string(),
            values: HashMap::new(),
            literals: HashMap::new(),
        };
        for p in &module.params {
            let value = match overrides.get(&p.name) {
                Some(v) if !p.local => *v,
                _ => eval_const(&p.value, &scope.values)
                    .ok_or_else(|| FrontendError::UnresolvedParameter(format!("{prefix}{}", p.name)))?,
            };
            let lit = match (&p.value.kind, overrides.get(&p.name)) {
                (ExprKind::Number(l), None) => l.clone(),
                _ => Literal {
                    text: value.to_string(),
                    width: None,
                    value: Some(value as u64),
                },
            };
            scope.values.insert(p.name.clone(), value);
            scope.literals.insert(p.name.clone(), lit);
        }

        let bounds = |r: Option<&Range>, name: &str| -> Result<(i64, i64)> {
            match r {
                None => Ok((0, 0)),
                Some(r) => {
                    let msb = eval_const(&r.msb, &scope.values);
                    let lsb = eval_const(&r.lsb, &scope.values);
                    match (msb, lsb) {
                        (Some(m), Some(l)) => Ok((m, l)),
                        _ => Err(FrontendError::UnresolvedParameter(format!("range of {prefix}{name}"))),
                    }
                }
            }
        };
        for p in &module.ports {
            let (msb, lsb) = bounds(p.range.as_ref(), &p.name)?;
            let kind = match (is_top, p.dir) {
                (true, Direction::Input) => SignalKind::Input,
                (true, Direction::Output) => SignalKind::Output,
                (true, Direction::Inout) => SignalKind::Inout,
                (false, _) if p.is_reg => SignalKind::Reg,
                (false, _) => SignalKind::Wire,
            };
            self.out.signals.push(FlatSignal {
                name: format!("{prefix}{}", p.name),
                kind,
                msb,
                lsb,
            });
        }
        for n in &module.nets {
            let (msb, lsb) = match n.kind {
                NetKind::Integer => (31, 0),
                _ => bounds(n.range.as_ref(), &n.name)?,
            };
            self.out.signals.push(FlatSignal {
                name: format!("{prefix}{}", n.name),
                kind: if n.kind == NetKind::Wire { SignalKind::Wire } else { SignalKind::Reg },
                msb,
                lsb,
            });
        }

        for item in &module.items {
            match item {
                Item::Assign(a) => self.out.items.push(Item::Assign(ContAssign {
                    lhs: scope.substitute(&a.lhs),
                    rhs: scope.substitute(&a.rhs),
                    loc: a.loc,
                })),
                Item::Always(a) => {
                    let sensitivity = match &a.sensitivity {
                        Sensitivity::Star => Sensitivity::Star,
                        Sensitivity::List(list) => Sensitivity::List(
                            list.iter()
                                .map(|s| SensItem {
                                    edge: s.edge,
                                    signal: format!("{prefix}{}", s.signal),
                                })
                                .collect(),
                        ),
                    };
                    self.out.items.push(Item::Always(AlwaysBlock {
                        sensitivity,
                        body: scope.substitute_stmt(&a.body),
                        loc: a.loc,
                    }));
                }
                Item::Instance(inst) => self.instance(inst, &scope, stack)?,
            }
        }
        Ok(())
    }

    fn instance(&mut self, inst: &Instance, scope: &Scope, stack: &mut Vec<String>) -> Result<()> {
        let child = self
            .ast
            .module(&inst.module)
            .ok_or_else(|| FrontendError::UnknownModule(inst.module.clone()))?;
        if let Some(start) = stack.iter().position(|m| *m == inst.module) {
            let mut cycle = stack[start..].to_vec();
            cycle.push(inst.module.clone());
            return Err(FrontendError::RecursiveInstantiation(cycle));
        }
        let eval = |e: &Expr, what: &str| {
            eval_const(e, &scope.values)
                .ok_or_else(|| FrontendError::UnresolvedParameter(format!("{}{}.{what}", scope.prefix, inst.name)))
        };
        let mut overrides = HashMap::new();
        let overridable: Vec<&ParamDecl> = child.params.iter().filter(|p| !p.local).collect();
        match &inst.params {
            ParamOverrides::None => {}
            ParamOverrides::Positional(values) => {
                for (i, v) in values.iter().enumerate() {
                    let p = overridable
                        .get(i)
                        .ok_or_else(|| FrontendError::UnresolvedParameter(format!("{}#{i}", inst.module)))?;
                    overrides.insert(p.name.clone(), eval(v, &p.name)?);
                }
            }
            ParamOverrides::Named(values) => {
                for (name, v) in values {
                    if !overridable.iter().any(|p| &p.name == name) {
                        return Err(FrontendError::UnresolvedParameter(format!("{}.{name}", inst.module)));
                    }
                    overrides.insert(name.clone(), eval(v, name)?);
                }
            }
        }

        let child_prefix = format!("{}{}.", scope.prefix, inst.name);
        stack.push(inst.module.clone());
        self.inline(child, &child_prefix, &overrides, stack, false)?;
        stack.pop();

        let bindings: Vec<(&Port, &Expr)> = match &inst.connections {
            Connections::Positional(v) => {
                if v.len() > child.ports.len() {
                    return Err(FrontendError::UnknownPort {
                        module: inst.module.clone(),
                        port: format!("#{}", v.len()),
                    });
                }
                child
                    .ports
                    .iter()
                    .zip(v)
                    .filter_map(|(p, e)| e.as_ref().map(|e| (p, e)))
                    .collect()
            }
            Connections::Named(v) => {
                let mut out = Vec::new();
                for (name, e) in v {
                    let p = child.port(name).ok_or_else(|| FrontendError::UnknownPort {
                        module: inst.module.clone(),
                        port: name.clone(),
                    })?;
                    if let Some(e) = e {
                        out.push((p, e));
                    }
                }
                out
            }
        };
        for (port, expr) in bindings {
            let inner = Expr::new(ExprKind::Ident(format!("{child_prefix}{}", port.name)), inst.loc);
            let outer = scope.substitute(expr);
            let (lhs, rhs) = match port.dir {
                Direction::Input | Direction::Inout => (inner, outer),
                Direction::Output => {
                    if outer.lvalue_targets().is_empty() {
                        return Err(FrontendError::UnknownPort {
                            module: inst.module.clone(),
                            port: format!("{} (output bound to a non-assignable expression)", port.name),
                        });
                    }
                    (outer, inner)
                }
            };
            self.out.items.push(Item::Assign(ContAssign { lhs, rhs, loc: inst.loc }));
        }
        Ok(())
    }
}
