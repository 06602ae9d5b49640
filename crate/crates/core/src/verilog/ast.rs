//! Syntax tree for the supported Verilog-2001 subset.

use std::fmt;

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ast {
    pub modules: Vec<ModuleDecl>,
}

impl Ast {
    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }

    pub fn module_mut(&mut self, name: &str) -> Option<&mut ModuleDecl> {
        self.modules.iter_mut().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Input,
    Output,
    Inout,
}

impl Direction {
    pub fn keyword(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        }
    }
}

/// `[msb:lsb]` with unevaluated bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub name: String,
    pub dir: Direction,
    pub range: Option<Range>,
    /// Declared as `output reg`.
    pub is_reg: bool,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetKind {
    Wire,
    Reg,
    Integer,
}

impl NetKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NetKind::Wire => "wire",
            NetKind::Reg => "reg",
            NetKind::Integer => "integer",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetDecl {
    pub name: String,
    pub kind: NetKind,
    pub range: Option<Range>,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub value: Expr,
    pub local: bool,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModuleDecl {
    pub name: String,
    pub ports: Vec<Port>,
    pub nets: Vec<NetDecl>,
    pub params: Vec<ParamDecl>,
    pub items: Vec<Item>,
    pub loc: Loc,
}

impl ModuleDecl {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn net(&self, name: &str) -> Option<&NetDecl> {
        self.nets.iter().find(|n| n.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&ParamDecl> {
        self.params.iter().find(|p| p.name == name)
    }

    /// True when `name` is declared as a port, net, or parameter.
    pub fn declares(&self, name: &str) -> bool {
        self.port(name).is_some() || self.net(name).is_some() || self.param(name).is_some()
    }

    /// Range of a port or net, if it has one.
    pub fn range_of(&self, name: &str) -> Option<&Range> {
        if let Some(p) = self.port(name) {
            return p.range.as_ref();
        }
        self.net(name).and_then(|n| n.range.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Assign(ContAssign),
    Always(AlwaysBlock),
    Instance(Instance),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContAssign {
    pub lhs: Expr,
    pub rhs: Expr,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Pos,
    Neg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensItem {
    pub edge: Option<Edge>,
    pub signal: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sensitivity {
    /// `@*` or `@(*)`
    Star,
    List(Vec<SensItem>),
}

impl Sensitivity {
    pub fn is_clocked(&self) -> bool {
        match self {
            Sensitivity::Star => false,
            Sensitivity::List(items) => items.iter().any(|s| s.edge.is_some()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlwaysBlock {
    pub sensitivity: Sensitivity,
    pub body: Stmt,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Connections {
    Positional(Vec<Option<Expr>>),
    Named(Vec<(String, Option<Expr>)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamOverrides {
    None,
    Positional(Vec<Expr>),
    Named(Vec<(String, Expr)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub module: String,
    pub name: String,
    pub params: ParamOverrides,
    pub connections: Connections,
    pub loc: Loc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseKind {
    Case,
    Casez,
    Casex,
}

impl CaseKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CaseKind::Case => "case",
            CaseKind::Casez => "casez",
            CaseKind::Casex => "casex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseArm {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Block(Vec<Stmt>),
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
        loc: Loc,
    },
    Case {
        kind: CaseKind,
        subject: Expr,
        arms: Vec<CaseArm>,
        default: Option<Box<Stmt>>,
        loc: Loc,
    },
    Assign {
        lhs: Expr,
        rhs: Expr,
        blocking: bool,
        loc: Loc,
    },
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Not,
    LogicNot,
    Neg,
    Plus,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Not => "~",
            UnaryOp::LogicNot => "!",
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXnor => "~^",
        }
    }

    /// Operator name used for data-flow graph labels.
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Not => "Unot",
            UnaryOp::LogicNot => "Ulnot",
            UnaryOp::Neg => "Uminus",
            UnaryOp::Plus => "Uplus",
            UnaryOp::RedAnd => "Uand",
            UnaryOp::RedOr => "Uor",
            UnaryOp::RedXor => "Uxor",
            UnaryOp::RedNand => "Unand",
            UnaryOp::RedNor => "Unor",
            UnaryOp::RedXnor => "Uxnor",
        }
    }

    pub const ALL: [UnaryOp; 10] = [
        UnaryOp::Not,
        UnaryOp::LogicNot,
        UnaryOp::Neg,
        UnaryOp::Plus,
        UnaryOp::RedAnd,
        UnaryOp::RedOr,
        UnaryOp::RedXor,
        UnaryOp::RedNand,
        UnaryOp::RedNor,
        UnaryOp::RedXnor,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Shl,
    Shr,
    AShl,
    AShr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    And,
    Or,
    Xor,
    Xnor,
    LogicAnd,
    LogicOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Mod => "%",
            BinaryOp::Shl => "<<",
            BinaryOp::Shr => ">>",
            BinaryOp::AShl => "<<<",
            BinaryOp::AShr => ">>>",
            BinaryOp::Lt => "<",
            BinaryOp::Gt => ">",
            BinaryOp::Le => "<=",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::CaseEq => "===",
            BinaryOp::CaseNe => "!==",
            BinaryOp::And => "&",
            BinaryOp::Or => "|",
            BinaryOp::Xor => "^",
            BinaryOp::Xnor => "~^",
            BinaryOp::LogicAnd => "&&",
            BinaryOp::LogicOr => "||",
        }
    }

    /// Operator name used for data-flow graph labels.
    pub fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "Plus",
            BinaryOp::Sub => "Minus",
            BinaryOp::Mul => "Times",
            BinaryOp::Div => "Divide",
            BinaryOp::Mod => "Mod",
            BinaryOp::Shl => "Sll",
            BinaryOp::Shr => "Srl",
            BinaryOp::AShl => "Sla",
            BinaryOp::AShr => "Sra",
            BinaryOp::Lt => "LessThan",
            BinaryOp::Gt => "GreaterThan",
            BinaryOp::Le => "LessEq",
            BinaryOp::Ge => "GreaterEq",
            BinaryOp::Eq => "Eq",
            BinaryOp::Ne => "NotEq",
            BinaryOp::CaseEq => "Eql",
            BinaryOp::CaseNe => "NotEql",
            BinaryOp::And => "And",
            BinaryOp::Or => "Or",
            BinaryOp::Xor => "Xor",
            BinaryOp::Xnor => "Xnor",
            BinaryOp::LogicAnd => "Land",
            BinaryOp::LogicOr => "Lor",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::LogicOr => 1,
            BinaryOp::LogicAnd => 2,
            BinaryOp::Or => 3,
            BinaryOp::Xor | BinaryOp::Xnor => 4,
            BinaryOp::And => 5,
            BinaryOp::Eq | BinaryOp::Ne | BinaryOp::CaseEq | BinaryOp::CaseNe => 6,
            BinaryOp::Lt | BinaryOp::Gt | BinaryOp::Le | BinaryOp::Ge => 7,
            BinaryOp::Shl | BinaryOp::Shr | BinaryOp::AShl | BinaryOp::AShr => 8,
            BinaryOp::Add | BinaryOp::Sub => 9,
            BinaryOp::Mul | BinaryOp::Div | BinaryOp::Mod => 10,
        }
    }

    pub const ALL: [BinaryOp; 23] = [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::Div,
        BinaryOp::Mod,
        BinaryOp::Shl,
        BinaryOp::Shr,
        BinaryOp::AShl,
        BinaryOp::AShr,
        BinaryOp::Lt,
        BinaryOp::Gt,
        BinaryOp::Le,
        BinaryOp::Ge,
        BinaryOp::Eq,
        BinaryOp::Ne,
        BinaryOp::CaseEq,
        BinaryOp::CaseNe,
        BinaryOp::And,
        BinaryOp::Or,
        BinaryOp::Xor,
        BinaryOp::Xnor,
        BinaryOp::LogicAnd,
        BinaryOp::LogicOr,
    ];
}

/// A numeric literal kept in its source spelling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Literal {
    pub text: String,
    pub width: Option<u32>,
    /// `None` when the digits contain x/z/? bits.
    pub value: Option<u64>,
}

impl Literal {
    pub fn unsized_decimal(value: u64) -> Self {
        Literal {
            text: value.to_string(),
            width: None,
            value: Some(value),
        }
    }

    pub fn sized_hex(width: u32, value: u64) -> Self {
        let masked = if width >= 64 { value } else { value & ((1u64 << width) - 1) };
        Literal {
            text: format!("{width}'h{masked:x}"),
            width: Some(width),
            value: Some(masked),
        }
    }

    pub fn sized_bin(width: u32, value: u64) -> Self {
        let masked = if width >= 64 { value } else { value & ((1u64 << width) - 1) };
        Literal {
            text: format!("{width}'b{masked:0w$b}", w = width as usize),
            width: Some(width),
            value: Some(masked),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub loc: Loc,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Ident(String),
    Number(Literal),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    Ternary(Box<Expr>, Box<Expr>, Box<Expr>),
    Concat(Vec<Expr>),
    Repeat(Box<Expr>, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Slice(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, loc: Loc) -> Self {
        Expr { kind, loc }
    }

    pub fn ident(name: impl Into<String>) -> Self {
        Expr::new(ExprKind::Ident(name.into()), Loc::default())
    }

    pub fn number(lit: Literal) -> Self {
        Expr::new(ExprKind::Number(lit), Loc::default())
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Self {
        Expr::new(ExprKind::Unary(op, Box::new(e)), Loc::default())
    }

    pub fn binary(op: BinaryOp, l: Expr, r: Expr) -> Self {
        Expr::new(ExprKind::Binary(op, Box::new(l), Box::new(r)), Loc::default())
    }

    pub fn ternary(c: Expr, t: Expr, f: Expr) -> Self {
        Expr::new(
            ExprKind::Ternary(Box::new(c), Box::new(t), Box::new(f)),
            Loc::default(),
        )
    }

    pub fn slice(base: Expr, msb: u64, lsb: u64) -> Self {
        Expr::new(
            ExprKind::Slice(
                Box::new(base),
                Box::new(Expr::number(Literal::unsized_decimal(msb))),
                Box::new(Expr::number(Literal::unsized_decimal(lsb))),
            ),
            Loc::default(),
        )
    }

    pub fn as_ident(&self) -> Option<&str> {
        match &self.kind {
            ExprKind::Ident(n) => Some(n),
            _ => None,
        }
    }

    /// Visits every sub-expression in pre-order.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Ident(_) | ExprKind::Number(_) => {}
            ExprKind::Unary(_, e) => e.walk(f),
            ExprKind::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
            ExprKind::Ternary(c, t, e) => {
                c.walk(f);
                t.walk(f);
                e.walk(f);
            }
            ExprKind::Concat(parts) => parts.iter().for_each(|p| p.walk(f)),
            ExprKind::Repeat(n, parts) => {
                n.walk(f);
                parts.iter().for_each(|p| p.walk(f));
            }
            ExprKind::Index(b, i) => {
                b.walk(f);
                i.walk(f);
            }
            ExprKind::Slice(b, m, l) => {
                b.walk(f);
                m.walk(f);
                l.walk(f);
            }
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Expr)) {
        f(self);
        match &mut self.kind {
            ExprKind::Ident(_) | ExprKind::Number(_) => {}
            ExprKind::Unary(_, e) => e.walk_mut(f),
            ExprKind::Binary(_, l, r) => {
                l.walk_mut(f);
                r.walk_mut(f);
            }
            ExprKind::Ternary(c, t, e) => {
                c.walk_mut(f);
                t.walk_mut(f);
                e.walk_mut(f);
            }
            ExprKind::Concat(parts) => parts.iter_mut().for_each(|p| p.walk_mut(f)),
            ExprKind::Repeat(n, parts) => {
                n.walk_mut(f);
                parts.iter_mut().for_each(|p| p.walk_mut(f));
            }
            ExprKind::Index(b, i) => {
                b.walk_mut(f);
                i.walk_mut(f);
            }
            ExprKind::Slice(b, m, l) => {
                b.walk_mut(f);
                m.walk_mut(f);
                l.walk_mut(f);
            }
        }
    }

    /// Renames identifiers everywhere in the expression.
    pub fn rename(&mut self, map: &impl Fn(&str) -> Option<String>) {
        self.walk_mut(&mut |e| {
            if let ExprKind::Ident(n) = &mut e.kind {
                if let Some(new) = map(n) {
                    *n = new;
                }
            }
        });
    }

    /// Names of the signals written when this expression is an assignment target.
    pub fn lvalue_targets(&self) -> Vec<&str> {
        match &self.kind {
            ExprKind::Ident(n) => vec![n.as_str()],
            ExprKind::Index(b, _) | ExprKind::Slice(b, _, _) => b.lvalue_targets(),
            ExprKind::Concat(parts) => parts.iter().flat_map(|p| p.lvalue_targets()).collect(),
            _ => Vec::new(),
        }
    }
}

impl Stmt {
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Stmt)) {
        f(self);
        match self {
            Stmt::Block(stmts) => stmts.iter().for_each(|s| s.walk(f)),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            Stmt::Case { arms, default, .. } => {
                arms.iter().for_each(|a| a.body.walk(f));
                if let Some(d) = default {
                    d.walk(f);
                }
            }
            Stmt::Assign { .. } | Stmt::Null => {}
        }
    }

    pub fn walk_mut(&mut self, f: &mut impl FnMut(&mut Stmt)) {
        f(self);
        match self {
            Stmt::Block(stmts) => stmts.iter_mut().for_each(|s| s.walk_mut(f)),
            Stmt::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk_mut(f);
                if let Some(e) = else_branch {
                    e.walk_mut(f);
                }
            }
            Stmt::Case { arms, default, .. } => {
                arms.iter_mut().for_each(|a| a.body.walk_mut(f));
                if let Some(d) = default {
                    d.walk_mut(f);
                }
            }
            Stmt::Assign { .. } | Stmt::Null => {}
        }
    }

    /// Every expression in the statement tree, including conditions and case labels.
    pub fn exprs_mut(&mut self, f: &mut impl FnMut(&mut Expr, bool)) {
        self.walk_mut(&mut |s| match s {
            Stmt::If { cond, .. } => f(cond, false),
            Stmt::Case { subject, arms, .. } => {
                f(subject, false);
                for arm in arms {
                    for l in &mut arm.labels {
                        f(l, false);
                    }
                }
            }
            Stmt::Assign { lhs, rhs, .. } => {
                f(lhs, true);
                f(rhs, false);
            }
            Stmt::Block(_) | Stmt::Null => {}
        });
    }

    pub fn exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr, bool)) {
        self.walk(&mut |s| match s {
            Stmt::If { cond, .. } => f(cond, false),
            Stmt::Case { subject, arms, .. } => {
                f(subject, false);
                for arm in arms {
                    for l in &arm.labels {
                        f(l, false);
                    }
                }
            }
            Stmt::Assign { lhs, rhs, .. } => {
                f(lhs, true);
                f(rhs, false);
            }
            Stmt::Block(_) | Stmt::Null => {}
        });
    }
}
