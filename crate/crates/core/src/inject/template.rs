//! Trigger and payload rewrites on a single module.

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::result::Result;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::InjectError;
use crate::verilog::*;

pub const TROJAN_COUNTER: &str = "Trojan_Counter";
pub const TROJAN_TRIGGER_OUT: &str = "Trojan_Trigger_Out";
pub const TROJAN_PAYLOAD: &str = "Trojan_Payload";
pub const TROJAN_ORIG: &str = "Trojan_Orig";
pub const TROJAN_STALL: &str = "Trojan_Stall";

/// RISC-V `EBREAK`, the default denial-of-service instruction.
pub const EBREAK: u64 = 0x0010_0073;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateKind {
    DenialOfService,
    InfoLeak,
    FunctionalityChange,
    PerfDegrade,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 4] = [
        TemplateKind::DenialOfService,
        TemplateKind::InfoLeak,
        TemplateKind::FunctionalityChange,
        TemplateKind::PerfDegrade,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateKind::DenialOfService => "DenialOfService",
            TemplateKind::InfoLeak => "InfoLeak",
            TemplateKind::FunctionalityChange => "FunctionalityChange",
            TemplateKind::PerfDegrade => "PerfDegrade",
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateKind {
    type Err = String;

    /// Accepts the full name or the short forms `dos`, `leak`, `func`, `perf`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "dos" | "denialofservice" => Ok(TemplateKind::DenialOfService),
            "leak" | "infoleak" => Ok(TemplateKind::InfoLeak),
            "func" | "functionalitychange" => Ok(TemplateKind::FunctionalityChange),
            "perf" | "perfdegrade" => Ok(TemplateKind::PerfDegrade),
            _ => Err(format!("unknown template `{s}` (expected dos, leak, func, or perf)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerParams {
    pub counter_width: u32,
    pub threshold: u64,
    /// Values compared against the watched bit-slice; any match counts.
    pub opcode_watch: Vec<u64>,
    /// Defaults to the widest data input.
    pub watch_signal: Option<String>,
    pub watch_msb: u32,
    pub watch_lsb: u32,
}

impl Default for TriggerParams {
    fn default() -> Self {
        TriggerParams {
            counter_width: 16,
            threshold: 100,
            // BCC, JALR, and RCC major opcodes, bits [6:2].
            opcode_watch: vec![0b11000, 0b11001, 0b01100],
            watch_signal: None,
            watch_msb: 6,
            watch_lsb: 2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadParams {
    /// Defaults to the first entry of [`payload_targets`].
    pub target_signal: Option<String>,
    /// Denial-of-service override; `EBREAK` when unset.
    pub malicious_value: Option<u64>,
    /// Register leaked by the info-leak template.
    pub secret_signal: Option<String>,
}

/// Substrings that identify clock and reset inputs. A pattern matches a
/// name that starts with it or contains it after an underscore.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamePatterns {
    pub clock: Vec<String>,
    pub reset: Vec<String>,
}

impl Default for NamePatterns {
    fn default() -> Self {
        NamePatterns {
            clock: vec!["clk".into(), "CLK".into()],
            reset: vec!["res".into(), "rst".into(), "RES".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrojanTemplate {
    pub kind: TemplateKind,
    pub trigger: TriggerParams,
    pub payload: PayloadParams,
    pub names: NamePatterns,
}

impl TrojanTemplate {
    pub fn new(kind: TemplateKind) -> Self {
        TrojanTemplate {
            kind,
            trigger: TriggerParams::default(),
            payload: PayloadParams::default(),
            names: NamePatterns::default(),
        }
    }

    pub fn validate(&self) -> Result<(), InjectError> {
        let t = &self.trigger;
        if !(1..=63).contains(&t.counter_width) {
            return Err(InjectError::InvalidTemplate(format!("counter width {} outside 1..=63", t.counter_width)));
        }
        if t.threshold >= 1u64 << t.counter_width {
            return Err(InjectError::InvalidTemplate(format!(
                "threshold {} does not fit a {}-bit counter",
                t.threshold, t.counter_width
            )));
        }
        if t.watch_msb < t.watch_lsb || t.watch_msb - t.watch_lsb >= 63 {
            return Err(InjectError::InvalidTemplate(format!("bad watch slice [{}:{}]", t.watch_msb, t.watch_lsb)));
        }
        Ok(())
    }
}

/// Where the trigger landed and what it is called.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerInfo {
    pub module: String,
    pub clock: String,
    pub reset: String,
    pub reset_active_low: bool,
    pub watch_signal: String,
    pub watch_slice: (u32, u32),
    /// Patterns after masking to the slice width, duplicates removed.
    pub opcode_watch: Vec<u64>,
    pub counter: String,
    pub trigger_out: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub source_design: String,
    pub kind: TemplateKind,
    pub module: String,
    pub target: String,
    pub secret: Option<String>,
    /// Every signal the trojan declared, in declaration order.
    pub inserted: Vec<String>,
    pub trigger: TriggerInfo,
    pub seed: u64,
}

fn matches_pattern(name: &str, pattern: &str) -> bool {
    name.starts_with(pattern) || name.contains(&format!("_{pattern}"))
}

fn param_env(m: &ModuleDecl) -> HashMap<String, i64> {
    let mut env = HashMap::new();
    for p in &m.params {
        if let Some(v) = eval_const(&p.value, &env) {
            env.insert(p.name.clone(), v);
        }
    }
    env
}

fn width_of(m: &ModuleDecl, name: &str, env: &HashMap<String, i64>) -> u32 {
    if m.net(name).is_some_and(|n| n.kind == NetKind::Integer) {
        return 32;
    }
    match m.range_of(name) {
        Some(r) => match (eval_const(&r.msb, env), eval_const(&r.lsb, env)) {
            (Some(a), Some(b)) => (a - b).unsigned_abs() as u32 + 1,
            _ => 1,
        },
        None => 1,
    }
}

fn find_control(m: &ModuleDecl, patterns: &[String], skip: Option<&str>) -> Option<String> {
    let env = param_env(m);
    m.ports
        .iter()
        .filter(|p| p.dir == Direction::Input && Some(p.name.as_str()) != skip)
        .filter(|p| width_of(m, &p.name, &env) == 1)
        .find(|p| patterns.iter().any(|pat| matches_pattern(&p.name, pat)))
        .map(|p| p.name.clone())
}

/// Data inputs: inputs other than clock and reset, in declaration order.
fn data_inputs(m: &ModuleDecl, names: &NamePatterns) -> Vec<String> {
    let clock = find_control(m, &names.clock, None);
    let reset = find_control(m, &names.reset, clock.as_deref());
    m.ports
        .iter()
        .filter(|p| p.dir == Direction::Input)
        .filter(|p| Some(&p.name) != clock.as_ref() && Some(&p.name) != reset.as_ref())
        .map(|p| p.name.clone())
        .collect()
}

fn fresh_name(m: &ModuleDecl, base: &str) -> Result<String, InjectError> {
    if !m.declares(base) {
        return Ok(base.to_string());
    }
    (1..100)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !m.declares(n))
        .ok_or_else(|| InjectError::SignalCollision(base.to_string()))
}

fn num(v: u64) -> Expr {
    Expr::number(Literal::unsized_decimal(v))
}

fn width_range(width: u32) -> Option<Range> {
    (width > 1).then(|| Range {
        msb: num(width as u64 - 1),
        lsb: num(0),
    })
}

fn nb_assign(lhs: &str, rhs: Expr) -> Stmt {
    Stmt::Assign {
        lhs: Expr::ident(lhs),
        rhs,
        blocking: false,
        loc: Loc::default(),
    }
}

fn if_else(cond: Expr, then_branch: Stmt, else_branch: Option<Stmt>) -> Stmt {
    Stmt::If {
        cond,
        then_branch: Box::new(then_branch),
        else_branch: else_branch.map(Box::new),
        loc: Loc::default(),
    }
}

fn clocked(clock: &str, body: Stmt) -> Item {
    Item::Always(AlwaysBlock {
        sensitivity: Sensitivity::List(vec![SensItem {
            edge: Some(Edge::Pos),
            signal: clock.to_string(),
        }]),
        body,
        loc: Loc::default(),
    })
}

fn reg(name: &str, range: Option<Range>, kind: NetKind) -> NetDecl {
    NetDecl {
        name: name.to_string(),
        kind,
        range,
        loc: Loc::default(),
    }
}

fn reset_active(info: &TriggerInfo) -> Expr {
    if info.reset_active_low {
        Expr::unary(UnaryOp::LogicNot, Expr::ident(&info.reset))
    } else {
        Expr::ident(&info.reset)
    }
}

/// Adds `Trojan_Counter` and `Trojan_Trigger_Out` to `module`: the counter
/// increments on every clock where the watched slice matches a pattern and
/// reset is inactive, and the trigger latches once the counter exceeds the
/// threshold.
pub fn inject_trigger(ast: &Ast, t: &TrojanTemplate, module: &str) -> Result<(Ast, TriggerInfo), InjectError> {
    t.validate()?;
    let mut ast = ast.clone();
    let m = ast
        .module_mut(module)
        .ok_or_else(|| InjectError::UnknownModule(module.to_string()))?;
    let clock = find_control(m, &t.names.clock, None).ok_or_else(|| InjectError::NoClockFound(module.to_string()))?;
    let reset =
        find_control(m, &t.names.reset, Some(&clock)).ok_or_else(|| InjectError::NoResetFound(module.to_string()))?;
    let env = param_env(m);
    let watch = match &t.trigger.watch_signal {
        Some(s) if m.declares(s) => s.clone(),
        Some(s) => return Err(InjectError::TargetNotFound(s.clone())),
        None => {
            let inputs = data_inputs(m, &t.names);
            let mut best: Option<(u32, String)> = None;
            for name in inputs {
                let w = width_of(m, &name, &env);
                if best.as_ref().is_none_or(|(bw, _)| w > *bw) {
                    best = Some((w, name));
                }
            }
            best.ok_or_else(|| InjectError::NoWatchSignal(module.to_string()))?.1
        }
    };
    let watch_width = width_of(m, &watch, &env);
    let (msb, lsb) = if watch_width > t.trigger.watch_msb {
        (t.trigger.watch_msb, t.trigger.watch_lsb)
    } else {
        (watch_width - 1, 0)
    };
    let field_width = msb - lsb + 1;
    let field = if watch_width == 1 {
        Expr::ident(&watch)
    } else {
        Expr::slice(Expr::ident(&watch), msb as u64, lsb as u64)
    };
    let mut patterns: Vec<u64> = Vec::new();
    for p in &t.trigger.opcode_watch {
        let masked = p & ((1u64 << field_width) - 1);
        if !patterns.contains(&masked) {
            patterns.push(masked);
        }
    }
    let cond = patterns
        .iter()
        .map(|&p| Expr::binary(BinaryOp::Eq, field.clone(), Expr::number(Literal::sized_bin(field_width, p))))
        .reduce(|a, b| Expr::binary(BinaryOp::LogicOr, a, b))
        .unwrap_or_else(|| Expr::number(Literal::sized_bin(1, 1)));

    let counter = fresh_name(m, TROJAN_COUNTER)?;
    let trigger_out = fresh_name(m, TROJAN_TRIGGER_OUT)?;
    let cw = t.trigger.counter_width;
    m.nets.push(reg(&counter, width_range(cw), NetKind::Reg));
    m.nets.push(reg(&trigger_out, None, NetKind::Reg));

    let info = TriggerInfo {
        module: module.to_string(),
        reset_active_low: reset.to_ascii_lowercase().ends_with('n'),
        clock,
        reset,
        watch_signal: watch,
        watch_slice: (msb, lsb),
        opcode_watch: patterns,
        counter,
        trigger_out,
    };
    let count = if_else(
        reset_active(&info),
        nb_assign(&info.counter, Expr::number(Literal::sized_hex(cw, 0))),
        Some(if_else(
            cond,
            nb_assign(&info.counter, Expr::binary(BinaryOp::Add, Expr::ident(&info.counter), num(1))),
            None,
        )),
    );
    let fire = if_else(
        reset_active(&info),
        nb_assign(&info.trigger_out, Expr::number(Literal::sized_bin(1, 0))),
        Some(if_else(
            Expr::binary(BinaryOp::Gt, Expr::ident(&info.counter), num(t.trigger.threshold)),
            nb_assign(&info.trigger_out, Expr::number(Literal::sized_bin(1, 1))),
            None,
        )),
    );
    m.items.push(clocked(&info.clock, count));
    m.items.push(clocked(&info.clock, fire));
    Ok((ast, info))
}

fn item_writes_any(item: &Item, names: &[&str]) -> bool {
    match item {
        Item::Assign(a) => a.lhs.lvalue_targets().iter().any(|t| names.contains(t)),
        Item::Always(a) => {
            let mut hit = false;
            a.body.exprs(&mut |e, lhs| {
                if lhs && e.lvalue_targets().iter().any(|t| names.contains(t)) {
                    hit = true;
                }
            });
            hit
        }
        Item::Instance(_) => false,
    }
}

fn trojan_names(m: &ModuleDecl) -> Vec<&str> {
    m.nets
        .iter()
        .map(|n| n.name.as_str())
        .filter(|n| n.starts_with("Trojan_"))
        .collect()
}

/// Registers assigned in clocked always blocks, excluding trojan logic.
fn clocked_registers(m: &ModuleDecl) -> Vec<String> {
    let skip = trojan_names(m);
    let mut out: Vec<String> = Vec::new();
    for item in &m.items {
        if let Item::Always(a) = item {
            if !a.sensitivity.is_clocked() || item_writes_any(item, &skip) {
                continue;
            }
            a.body.exprs(&mut |e, lhs| {
                if lhs {
                    for t in e.lvalue_targets() {
                        if !out.iter().any(|o| o == t) {
                            out.push(t.to_string());
                        }
                    }
                }
            });
        }
    }
    out
}

fn swapped(op: BinaryOp) -> Option<BinaryOp> {
    use BinaryOp::*;
    Some(match op {
        Add => Sub,
        Sub => Add,
        And => Or,
        Or => And,
        Xor => Xnor,
        Xnor => Xor,
        Lt => Ge,
        Ge => Lt,
        Gt => Le,
        Le => Gt,
        Eq => Ne,
        Ne => Eq,
        Shl => Shr,
        Shr => Shl,
        LogicAnd => LogicOr,
        LogicOr => LogicAnd,
        _ => return None,
    })
}

/// Assignment sites outside trojan logic, in item order: (target, swappable).
fn assign_sites(m: &ModuleDecl) -> Vec<(String, bool)> {
    let skip = trojan_names(m);
    let mut sites = Vec::new();
    let mut push = |lhs: &Expr, rhs: &Expr| {
        if let Some(t) = lhs.lvalue_targets().first() {
            let swap = matches!(&rhs.kind, ExprKind::Binary(op, _, _) if swapped(*op).is_some());
            sites.push((t.to_string(), swap));
        }
    };
    for item in &m.items {
        if item_writes_any(item, &skip) {
            continue;
        }
        match item {
            Item::Assign(a) => push(&a.lhs, &a.rhs),
            Item::Always(a) => a.body.walk(&mut |s| {
                if let Stmt::Assign { lhs, rhs, .. } = s {
                    push(lhs, rhs);
                }
            }),
            Item::Instance(_) => {}
        }
    }
    sites
}

/// Signals the payload of `kind` can act on, in preference order.
pub fn payload_targets(ast: &Ast, kind: TemplateKind, info: &TriggerInfo, names: &NamePatterns) -> Vec<String> {
    let Some(m) = ast.module(&info.module) else {
        return Vec::new();
    };
    match kind {
        TemplateKind::DenialOfService => {
            let mut v = data_inputs(m, names);
            // The watched bus first, as in an instruction-override payload.
            if let Some(i) = v.iter().position(|n| *n == info.watch_signal) {
                let w = v.remove(i);
                v.insert(0, w);
            }
            v
        }
        TemplateKind::InfoLeak => m
            .ports
            .iter()
            .filter(|p| p.dir == Direction::Output)
            .map(|p| p.name.clone())
            .collect(),
        TemplateKind::FunctionalityChange => {
            let sites = assign_sites(m);
            let mut v: Vec<String> = Vec::new();
            for want_swap in [true, false] {
                for (t, s) in &sites {
                    if *s == want_swap && !v.contains(t) {
                        v.push(t.clone());
                    }
                }
            }
            v
        }
        TemplateKind::PerfDegrade => clocked_registers(m),
    }
}

fn rename_reads(m: &mut ModuleDecl, ast_ports: &HashMap<String, Vec<(String, Direction)>>, from: &str, to: &str, skip: &[String]) -> usize {
    let hits = Cell::new(0usize);
    let map = |n: &str| {
        (n == from).then(|| {
            hits.set(hits.get() + 1);
            to.to_string()
        })
    };
    let skip: Vec<&str> = skip.iter().map(String::as_str).collect();
    for item in &mut m.items {
        if item_writes_any(item, &skip) {
            continue;
        }
        match item {
            Item::Assign(a) => a.rhs.rename(&map),
            Item::Always(a) => {
                if let Sensitivity::List(list) = &mut a.sensitivity {
                    for s in list.iter_mut().filter(|s| s.edge.is_none() && s.signal == from) {
                        s.signal = to.to_string();
                    }
                }
                a.body.exprs_mut(&mut |e, lhs| {
                    if !lhs {
                        e.rename(&map);
                    }
                });
            }
            Item::Instance(inst) => {
                let ports = ast_ports.get(&inst.module);
                let is_input = |i: usize, name: Option<&str>| {
                    ports.is_some_and(|ps| {
                        let p = match name {
                            Some(n) => ps.iter().find(|(pn, _)| pn == n),
                            None => ps.get(i),
                        };
                        p.is_some_and(|(_, d)| *d == Direction::Input)
                    })
                };
                match &mut inst.connections {
                    Connections::Positional(v) => {
                        for (i, e) in v.iter_mut().enumerate() {
                            if let Some(e) = e.as_mut().filter(|_| is_input(i, None)) {
                                e.rename(&map);
                            }
                        }
                    }
                    Connections::Named(v) => {
                        for (i, (n, e)) in v.iter_mut().enumerate() {
                            if let Some(e) = e.as_mut().filter(|_| is_input(i, Some(n))) {
                                e.rename(&map);
                            }
                        }
                    }
                }
            }
        }
    }
    hits.get()
}

/// Renames every use of output `target` to a fresh internal signal and
/// drives `target` from `f(internal)`. Returns the internal name.
fn reroute_output(m: &mut ModuleDecl, target: &str, f: impl FnOnce(Expr) -> Expr) -> Result<String, InjectError> {
    let orig = fresh_name(m, TROJAN_ORIG)?;
    let port = m
        .ports
        .iter_mut()
        .find(|p| p.name == target)
        .ok_or_else(|| InjectError::TargetNotFound(target.to_string()))?;
    let mut is_reg = port.is_reg;
    port.is_reg = false;
    let range = port.range.clone();
    if let Some(i) = m.nets.iter().position(|n| n.name == target) {
        is_reg |= m.nets[i].kind == NetKind::Reg;
        m.nets.remove(i);
    }
    let map = |n: &str| (n == target).then(|| orig.clone());
    for item in &mut m.items {
        match item {
            Item::Assign(a) => {
                a.lhs.rename(&map);
                a.rhs.rename(&map);
            }
            Item::Always(a) => {
                if let Sensitivity::List(list) = &mut a.sensitivity {
                    for s in list.iter_mut().filter(|s| s.signal == target) {
                        s.signal = orig.clone();
                    }
                }
                a.body.exprs_mut(&mut |e, _| e.rename(&map));
            }
            Item::Instance(inst) => match &mut inst.connections {
                Connections::Positional(v) => v.iter_mut().flatten().for_each(|e| e.rename(&map)),
                Connections::Named(v) => v.iter_mut().filter_map(|(_, e)| e.as_mut()).for_each(|e| e.rename(&map)),
            },
        }
    }
    let kind = if is_reg { NetKind::Reg } else { NetKind::Wire };
    m.nets.push(reg(&orig, range, kind));
    m.items.push(Item::Assign(ContAssign {
        lhs: Expr::ident(target),
        rhs: f(Expr::ident(&orig)),
        loc: Loc::default(),
    }));
    Ok(orig)
}

fn guard_assigns(s: &mut Stmt, target: &str, guard: &Expr) -> usize {
    match s {
        Stmt::Block(v) => v.iter_mut().map(|s| guard_assigns(s, target, guard)).sum(),
        Stmt::If {
            then_branch,
            else_branch,
            ..
        } => {
            guard_assigns(then_branch, target, guard)
                + else_branch.as_mut().map_or(0, |e| guard_assigns(e, target, guard))
        }
        Stmt::Case { arms, default, .. } => {
            arms.iter_mut().map(|a| guard_assigns(&mut a.body, target, guard)).sum::<usize>()
                + default.as_mut().map_or(0, |d| guard_assigns(d, target, guard))
        }
        Stmt::Assign { lhs, .. } if lhs.lvalue_targets().contains(&target) => {
            let inner = std::mem::replace(s, Stmt::Null);
            *s = if_else(guard.clone(), inner, None);
            1
        }
        Stmt::Assign { .. } | Stmt::Null => 0,
    }
}

/// Rewrites the `site`-th assignment (in [`assign_sites`] order) to
/// `trigger ? altered : original`.
fn alter_site(m: &mut ModuleDecl, site: usize, trigger: &str) {
    let skip: Vec<String> = trojan_names(m).into_iter().map(String::from).collect();
    let skip: Vec<&str> = skip.iter().map(String::as_str).collect();
    let mut k = 0usize;
    let mut alter = |lhs: &Expr, rhs: &mut Expr| {
        if lhs.lvalue_targets().is_empty() {
            return;
        }
        if k == site {
            let altered = match &rhs.kind {
                ExprKind::Binary(op, l, r) if swapped(*op).is_some() => {
                    Expr::binary(swapped(*op).expect("checked"), (**l).clone(), (**r).clone())
                }
                _ => Expr::unary(UnaryOp::Not, rhs.clone()),
            };
            *rhs = Expr::ternary(Expr::ident(trigger), altered, rhs.clone());
        }
        k += 1;
    };
    for item in &mut m.items {
        if item_writes_any(item, &skip) {
            continue;
        }
        match item {
            Item::Assign(a) => alter(&a.lhs, &mut a.rhs),
            Item::Always(a) => a.body.walk_mut(&mut |s| {
                if let Stmt::Assign { lhs, rhs, .. } = s {
                    alter(lhs, rhs);
                }
            }),
            Item::Instance(_) => {}
        }
    }
}

/// Adds the payload of `t.kind`, gated by the trigger `info` describes.
/// Returns the new AST, the target, the leaked secret (info-leak only), and
/// the names the payload declared.
pub fn inject_payload(
    ast: &Ast,
    t: &TrojanTemplate,
    info: &TriggerInfo,
) -> Result<(Ast, String, Option<String>, Vec<String>), InjectError> {
    let targets = payload_targets(ast, t.kind, info, &t.names);
    let ports: HashMap<String, Vec<(String, Direction)>> = ast
        .modules
        .iter()
        .map(|m| (m.name.clone(), m.ports.iter().map(|p| (p.name.clone(), p.dir)).collect()))
        .collect();
    let mut ast = ast.clone();
    let m = ast
        .module_mut(&info.module)
        .ok_or_else(|| InjectError::UnknownModule(info.module.clone()))?;
    if m.net(&info.trigger_out).is_none() {
        return Err(InjectError::MissingTrigger(info.module.clone()));
    }
    let target = match &t.payload.target_signal {
        Some(s) => s.clone(),
        None => targets.first().cloned().ok_or_else(|| InjectError::TargetNotFound(format!("<{}>", t.kind)))?,
    };
    if !m.declares(&target) {
        return Err(InjectError::TargetNotFound(target));
    }
    let trig = Expr::ident(&info.trigger_out);
    let env = param_env(m);
    let width = width_of(m, &target, &env);
    let is_output = m.port(&target).is_some_and(|p| p.dir == Direction::Output);
    let mut secret = None;
    let mut inserted = Vec::new();
    match t.kind {
        TemplateKind::DenialOfService => {
            let value = Expr::number(Literal::sized_hex(width, t.payload.malicious_value.unwrap_or(EBREAK)));
            if is_output {
                inserted.push(reroute_output(m, &target, |orig| Expr::ternary(trig, value, orig))?);
            } else {
                let payload = fresh_name(m, TROJAN_PAYLOAD)?;
                let skip = vec![info.counter.clone(), info.trigger_out.clone()];
                if rename_reads(m, &ports, &target, &payload, &skip) == 0 {
                    return Err(InjectError::TargetNotFound(format!("{target} (no consumers)")));
                }
                m.nets.push(reg(&payload, m.range_of(&target).cloned(), NetKind::Wire));
                m.items.push(Item::Assign(ContAssign {
                    lhs: Expr::ident(&payload),
                    rhs: Expr::ternary(trig, value, Expr::ident(&target)),
                    loc: Loc::default(),
                }));
                inserted.push(payload);
            }
        }
        TemplateKind::InfoLeak => {
            if !is_output {
                return Err(InjectError::TargetNotFound(format!("{target} (not an output)")));
            }
            let s = match &t.payload.secret_signal {
                Some(s) if m.declares(s) => s.clone(),
                Some(s) => return Err(InjectError::TargetNotFound(s.clone())),
                None => clocked_registers(m)
                    .into_iter()
                    .find(|r| *r != target)
                    .unwrap_or_else(|| info.watch_signal.clone()),
            };
            let leak = Expr::ternary(trig, Expr::ident(&s), Expr::number(Literal::sized_hex(width, 0)));
            inserted.push(reroute_output(m, &target, |orig| Expr::binary(BinaryOp::Xor, orig, leak))?);
            secret = Some(s);
        }
        TemplateKind::FunctionalityChange => {
            let sites = assign_sites(m);
            let site = sites
                .iter()
                .position(|(n, s)| *n == target && *s)
                .or_else(|| sites.iter().position(|(n, _)| *n == target))
                .ok_or_else(|| InjectError::TargetNotFound(format!("{target} (no assignment)")))?;
            alter_site(m, site, &info.trigger_out);
        }
        TemplateKind::PerfDegrade => {
            let stall = fresh_name(m, TROJAN_STALL)?;
            let guard = Expr::unary(
                UnaryOp::LogicNot,
                Expr::binary(BinaryOp::LogicAnd, trig, Expr::ident(&stall)),
            );
            let skip: Vec<String> = trojan_names(m).into_iter().map(String::from).collect();
            let skip: Vec<&str> = skip.iter().map(String::as_str).collect();
            let mut hits = 0;
            for item in &mut m.items {
                if item_writes_any(item, &skip) {
                    continue;
                }
                if let Item::Always(a) = item {
                    if a.sensitivity.is_clocked() {
                        hits += guard_assigns(&mut a.body, &target, &guard);
                    }
                }
            }
            if hits == 0 {
                return Err(InjectError::TargetNotFound(format!("{target} (not a clocked register)")));
            }
            m.nets.push(reg(&stall, None, NetKind::Reg));
            let toggle = if_else(
                reset_active(info),
                nb_assign(&stall, Expr::number(Literal::sized_bin(1, 0))),
                Some(nb_assign(&stall, Expr::unary(UnaryOp::Not, Expr::ident(&stall)))),
            );
            m.items.push(clocked(&info.clock, toggle));
            inserted.push(stall);
        }
    }
    Ok((ast, target, secret, inserted))
}

/// Trigger plus payload in one step.
pub fn inject(
    ast: &Ast,
    design: &str,
    t: &TrojanTemplate,
    module: &str,
    seed: u64,
) -> Result<(Ast, InjectionRecord), InjectError> {
    let (triggered, info) = inject_trigger(ast, t, module)?;
    let (out, target, secret, extra) = inject_payload(&triggered, t, &info)?;
    let mut inserted = vec![info.counter.clone(), info.trigger_out.clone()];
    inserted.extend(extra);
    Ok((
        out,
        InjectionRecord {
            source_design: design.to_string(),
            kind: t.kind,
            module: module.to_string(),
            target,
            secret,
            inserted,
            trigger: info,
            seed,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CORE: &str = "\
module core(input clk, input rst, input [31:0] IDATA, output reg [31:0] acc, output [31:0] y);
  wire [31:0] sum;
  assign sum = acc + IDATA;
  assign y = sum ^ IDATA;
  always @(posedge clk) begin
    if (rst) acc <= 32'h0;
    else acc <= sum;
  end
endmodule
";

    fn ast() -> Ast {
        parse(&SourceUnit::single("core.v", CORE, "core")).unwrap()
    }

    fn reparse(a: &Ast) -> Ast {
        parse(&SourceUnit::single("out.v", print_ast(a), "core")).unwrap()
    }

    #[test]
    fn trigger_adds_counter_and_flag() {
        let (out, info) = inject_trigger(&ast(), &TrojanTemplate::new(TemplateKind::DenialOfService), "core").unwrap();
        assert_eq!(info.clock, "clk");
        assert_eq!(info.reset, "rst");
        assert_eq!(info.watch_signal, "IDATA");
        assert_eq!(info.watch_slice, (6, 2));
        let text = print_ast(&out);
        assert!(text.contains("reg [15:0] Trojan_Counter;"), "{text}");
        assert!(text.contains("Trojan_Counter > 100"), "{text}");
        assert!(text.contains("IDATA[6:2] == 5'b11000"), "{text}");
        reparse(&out);
    }

    #[test]
    fn dos_routes_consumers_through_mux() {
        let (out, rec) = inject(&ast(), "core", &TrojanTemplate::new(TemplateKind::DenialOfService), "core", 0).unwrap();
        assert_eq!(rec.target, "IDATA");
        let text = print_ast(&out);
        assert!(text.contains("assign Trojan_Payload = Trojan_Trigger_Out ? 32'h100073 : IDATA;"), "{text}");
        assert!(text.contains("assign sum = acc + Trojan_Payload;"), "{text}");
        // The trigger still watches the real bus.
        assert!(text.contains("IDATA[6:2] == 5'b11001"), "{text}");
        reparse(&out);
    }

    #[test]
    fn threshold_zero_is_legal() {
        let mut t = TrojanTemplate::new(TemplateKind::DenialOfService);
        t.trigger.threshold = 0;
        let (out, _) = inject_trigger(&ast(), &t, "core").unwrap();
        assert!(print_ast(&out).contains("Trojan_Counter > 0"));
    }

    #[test]
    fn threshold_must_fit_counter() {
        let mut t = TrojanTemplate::new(TemplateKind::DenialOfService);
        t.trigger.counter_width = 4;
        t.trigger.threshold = 16;
        assert!(matches!(inject_trigger(&ast(), &t, "core"), Err(InjectError::InvalidTemplate(_))));
    }

    #[test]
    fn missing_clock_and_reset() {
        let a = parse(&SourceUnit::single("m.v", "module m(input a, output b); assign b = a; endmodule", "m")).unwrap();
        let t = TrojanTemplate::new(TemplateKind::DenialOfService);
        assert!(matches!(inject_trigger(&a, &t, "m"), Err(InjectError::NoClockFound(_))));
        let a = parse(&SourceUnit::single(
            "m.v",
            "module m(input clk, input a, output reg b); always @(posedge clk) b <= a; endmodule",
            "m",
        ))
        .unwrap();
        assert!(matches!(inject_trigger(&a, &t, "m"), Err(InjectError::NoResetFound(_))));
    }

    #[test]
    fn missing_target() {
        let mut t = TrojanTemplate::new(TemplateKind::DenialOfService);
        t.payload.target_signal = Some("nope".into());
        assert!(matches!(inject(&ast(), "core", &t, "core", 0), Err(InjectError::TargetNotFound(_))));
    }

    #[test]
    fn payload_needs_trigger() {
        let (_, info) = inject_trigger(&ast(), &TrojanTemplate::new(TemplateKind::InfoLeak), "core").unwrap();
        let r = inject_payload(&ast(), &TrojanTemplate::new(TemplateKind::InfoLeak), &info);
        assert!(matches!(r, Err(InjectError::MissingTrigger(_))));
    }

    #[test]
    fn names_are_suffixed_on_collision() {
        let src = CORE.replace("wire [31:0] sum;", "wire [31:0] sum; wire Trojan_Counter;");
        let a = parse(&SourceUnit::single("c.v", src, "core")).unwrap();
        let (_, info) = inject_trigger(&a, &TrojanTemplate::new(TemplateKind::DenialOfService), "core").unwrap();
        assert_eq!(info.counter, "Trojan_Counter_1");
        assert_eq!(info.trigger_out, "Trojan_Trigger_Out");
    }

    #[test]
    fn info_leak_xors_secret_into_output() {
        let (out, rec) = inject(&ast(), "core", &TrojanTemplate::new(TemplateKind::InfoLeak), "core", 0).unwrap();
        assert_eq!(rec.target, "acc");
        assert_eq!(rec.secret.as_deref(), Some("IDATA"));
        let text = print_ast(&out);
        assert!(text.contains("assign acc = Trojan_Orig ^ (Trojan_Trigger_Out ? IDATA : 32'h0);"), "{text}");
        assert!(text.contains("Trojan_Orig <= sum;"), "{text}");
        reparse(&out);
    }

    #[test]
    fn functionality_change_swaps_operator() {
        let (out, rec) = inject(&ast(), "core", &TrojanTemplate::new(TemplateKind::FunctionalityChange), "core", 0).unwrap();
        assert_eq!(rec.target, "sum");
        let text = print_ast(&out);
        assert!(text.contains("assign sum = Trojan_Trigger_Out ? (acc - IDATA) : (acc + IDATA);"), "{text}");
        reparse(&out);
    }

    #[test]
    fn perf_degrade_gates_register_updates() {
        let (out, rec) = inject(&ast(), "core", &TrojanTemplate::new(TemplateKind::PerfDegrade), "core", 0).unwrap();
        assert_eq!(rec.target, "acc");
        assert_eq!(rec.inserted, vec!["Trojan_Counter", "Trojan_Trigger_Out", "Trojan_Stall"]);
        let text = print_ast(&out);
        assert!(text.contains("!(Trojan_Trigger_Out && Trojan_Stall)"), "{text}");
        reparse(&out);
    }

    #[test]
    fn template_names_parse() {
        for k in TemplateKind::ALL {
            assert_eq!(k.as_str().parse::<TemplateKind>().unwrap(), k);
        }
        assert_eq!("dos".parse::<TemplateKind>().unwrap(), TemplateKind::DenialOfService);
        assert!("x".parse::<TemplateKind>().is_err());
    }
}
