//! Recursive-descent parser with one token of lookahead.

use super::ast::*;
use super::error::{FrontendError, Result};
use super::lexer::{tokenize, Token, TokenKind};

const UNSUPPORTED_KEYWORDS: &[(&str, &str)] = &[
    ("generate", "generate block"),
    ("genvar", "genvar"),
    ("function", "function"),
    ("task", "task"),
    ("initial", "initial block"),
    ("primitive", "user-defined primitive"),
    ("table", "user-defined primitive"),
    ("specify", "specify block"),
    ("defparam", "defparam"),
    ("for", "for loop"),
    ("while", "while loop"),
    ("repeat", "repeat loop"),
    ("forever", "forever loop"),
    ("fork", "fork/join"),
    ("wait", "wait statement"),
    ("real", "real variable"),
    ("time", "time variable"),
    ("tri", "tri net"),
    ("supply0", "supply net"),
    ("supply1", "supply net"),
    ("and", "gate primitive"),
    ("or", "gate primitive"),
    ("nand", "gate primitive"),
    ("nor", "gate primitive"),
    ("xor", "gate primitive"),
    ("xnor", "gate primitive"),
    ("not", "gate primitive"),
    ("buf", "gate primitive"),
    ("bufif0", "gate primitive"),
    ("bufif1", "gate primitive"),
    ("notif0", "gate primitive"),
    ("notif1", "gate primitive"),
    ("deassign", "procedural continuous assignment"),
    ("force", "force/release"),
    ("release", "force/release"),
    ("disable", "disable statement"),
    ("event", "named event"),
];

const RESERVED: &[&str] = &[
    "module",
    "endmodule",
    "input",
    "output",
    "inout",
    "wire",
    "reg",
    "integer",
    "signed",
    "parameter",
    "localparam",
    "assign",
    "always",
    "begin",
    "end",
    "if",
    "else",
    "case",
    "casez",
    "casex",
    "endcase",
    "default",
    "posedge",
    "negedge",
];

/// Parses one file into the modules it declares.
pub fn parse_file(path: &str, text: &str) -> Result<Vec<ModuleDecl>> {
    let normalized = super::preprocess::normalize(text);
    let tokens = tokenize(path, &normalized)?;
    let mut parser = Parser {
        path,
        tokens,
        pos: 0,
    };
    let mut modules = Vec::new();
    while !parser.at_eof() {
        if parser.is_kw("module") {
            modules.push(parser.module()?);
        } else if parser.is_kw("primitive") {
            return Err(parser.unsupported("user-defined primitive"));
        } else {
            return Err(parser.error_here("expected `module`"));
        }
    }
    Ok(modules)
}

struct Parser<'a> {
    path: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn loc(&self) -> Loc {
        self.peek().loc
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if !matches!(t.kind, TokenKind::Eof) {
            self.pos += 1;
        }
        t
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().kind, TokenKind::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn describe(kind: &TokenKind) -> String {
        match kind {
            TokenKind::Ident(s) => format!("`{s}`"),
            TokenKind::Number(l) => format!("number `{}`", l.text),
            TokenKind::Sym(s) => format!("`{s}`"),
            TokenKind::SystemName(s) => format!("`${s}`"),
            TokenKind::Str => "string literal".into(),
            TokenKind::Eof => "end of file".into(),
        }
    }

    fn error_here(&self, expected: &str) -> FrontendError {
        let t = self.peek();
        FrontendError::Syntax {
            path: self.path.to_string(),
            line: t.loc.line,
            col: t.loc.col,
            message: format!("{expected}, found {}", Self::describe(&t.kind)),
        }
    }

    fn unsupported(&self, feature: &str) -> FrontendError {
        FrontendError::UnsupportedConstruct {
            feature: feature.to_string(),
            location: format!("{}:{}", self.path, self.loc()),
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<Loc> {
        if self.is_sym(s) {
            Ok(self.advance().loc)
        } else {
            if s == ";" && self.is_sym("#") {
                return Err(self.unsupported("delay control"));
            }
            Err(self.error_here(&format!("expected `{s}`")))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.error_here(&format!("expected `{kw}`")))
        }
    }

    fn check_supported(&self) -> Result<()> {
        match &self.peek().kind {
            TokenKind::Ident(s) => {
                if let Some((_, feature)) = UNSUPPORTED_KEYWORDS.iter().find(|(k, _)| k == s) {
                    return Err(self.unsupported(feature));
                }
                Ok(())
            }
            TokenKind::SystemName(s) => Err(self.unsupported(&format!("system task `${s}`"))),
            TokenKind::Str => Err(self.unsupported("string literal")),
            _ => Ok(()),
        }
    }

    fn ident(&mut self) -> Result<(String, Loc)> {
        self.check_supported()?;
        match &self.peek().kind {
            TokenKind::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                let s = s.clone();
                let loc = self.advance().loc;
                Ok((s, loc))
            }
            _ => Err(self.error_here("expected identifier")),
        }
    }

    fn direction(&self) -> Option<Direction> {
        match &self.peek().kind {
            TokenKind::Ident(s) if s == "input" => Some(Direction::Input),
            TokenKind::Ident(s) if s == "output" => Some(Direction::Output),
            TokenKind::Ident(s) if s == "inout" => Some(Direction::Inout),
            _ => None,
        }
    }

    fn module(&mut self) -> Result<ModuleDecl> {
        let loc = self.loc();
        self.expect_kw("module")?;
        let (name, _) = self.ident()?;
        let mut m = ModuleDecl {
            name,
            ports: Vec::new(),
            nets: Vec::new(),
            params: Vec::new(),
            items: Vec::new(),
            loc,
        };
        if self.eat_sym("#") {
            self.expect_sym("(")?;
            self.param_port_list(&mut m)?;
            self.expect_sym(")")?;
        }
        // Non-ANSI port names waiting for their direction declaration.
        let mut pending: Vec<(String, Loc)> = Vec::new();
        if self.eat_sym("(") {
            if !self.is_sym(")") {
                if self.direction().is_some() {
                    self.ansi_ports(&mut m)?;
                } else {
                    loop {
                        pending.push(self.ident()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
            }
            self.expect_sym(")")?;
        }
        self.expect_sym(";")?;
        let mut declared_ports: Vec<Port> = Vec::new();
        while !self.is_kw("endmodule") {
            if self.at_eof() {
                return Err(self.error_here("expected `endmodule`"));
            }
            self.module_item(&mut m, &pending, &mut declared_ports)?;
        }
        self.advance();
        if !pending.is_empty() {
            for (pname, ploc) in &pending {
                let Some(p) = declared_ports.iter().find(|p| &p.name == pname) else {
                    return Err(FrontendError::Syntax {
                        path: self.path.to_string(),
                        line: ploc.line,
                        col: ploc.col,
                        message: format!("port `{pname}` has no direction declaration"),
                    });
                };
                m.ports.push(p.clone());
            }
        }
        self.resolve_identifiers(&mut m)?;
        Ok(m)
    }

    fn param_port_list(&mut self, m: &mut ModuleDecl) -> Result<()> {
        loop {
            let local = if self.eat_kw("localparam") {
                true
            } else {
                self.eat_kw("parameter");
                false
            };
            self.eat_kw("integer");
            self.eat_kw("signed");
            if self.is_sym("[") {
                self.range()?;
            }
            let (name, loc) = self.ident()?;
            self.expect_sym("=")?;
            let value = self.expr()?;
            self.push_param(m, ParamDecl { name, value, local, loc })?;
            if !self.eat_sym(",") {
                return Ok(());
            }
        }
    }

    fn push_param(&self, m: &mut ModuleDecl, p: ParamDecl) -> Result<()> {
        if m.declares(&p.name) {
            return Err(FrontendError::DuplicateDeclaration {
                module: m.name.clone(),
                name: p.name,
            });
        }
        m.params.push(p);
        Ok(())
    }

    fn ansi_ports(&mut self, m: &mut ModuleDecl) -> Result<()> {
        let mut dir = Direction::Input;
        let mut range: Option<Range> = None;
        let mut is_reg = false;
        loop {
            if let Some(d) = self.direction() {
                self.advance();
                dir = d;
                is_reg = false;
                if self.eat_kw("reg") {
                    is_reg = true;
                } else {
                    self.eat_kw("wire");
                }
                self.eat_kw("signed");
                range = if self.is_sym("[") { Some(self.range()?) } else { None };
            }
            let (name, loc) = self.ident()?;
            if m.port(&name).is_some() {
                return Err(FrontendError::DuplicateDeclaration {
                    module: m.name.clone(),
                    name,
                });
            }
            m.ports.push(Port {
                name,
                dir,
                range: range.clone(),
                is_reg,
                loc,
            });
            if !self.eat_sym(",") {
                return Ok(());
            }
        }
    }

    fn range(&mut self) -> Result<Range> {
        self.expect_sym("[")?;
        let msb = self.expr()?;
        self.expect_sym(":")?;
        let lsb = self.expr()?;
        self.expect_sym("]")?;
        Ok(Range { msb, lsb })
    }

    fn module_item(
        &mut self,
        m: &mut ModuleDecl,
        pending: &[(String, Loc)],
        declared_ports: &mut Vec<Port>,
    ) -> Result<()> {
        self.check_supported()?;
        if let Some(dir) = self.direction() {
            self.advance();
            let mut is_reg = self.eat_kw("reg");
            if !is_reg {
                self.eat_kw("wire");
            }
            self.eat_kw("signed");
            let range = if self.is_sym("[") { Some(self.range()?) } else { None };
            loop {
                let (name, loc) = self.ident()?;
                if !pending.iter().any(|(p, _)| *p == name) {
                    return Err(FrontendError::Syntax {
                        path: self.path.to_string(),
                        line: loc.line,
                        col: loc.col,
                        message: format!("`{name}` is not in the module port list"),
                    });
                }
                if declared_ports.iter().any(|p| p.name == name) {
                    return Err(FrontendError::DuplicateDeclaration {
                        module: m.name.clone(),
                        name,
                    });
                }
                // `output q; reg q;` is folded into the port once the reg is seen.
                if let Some(pos) = m.nets.iter().position(|n| n.name == name) {
                    let net = m.nets.remove(pos);
                    is_reg |= net.kind == NetKind::Reg;
                }
                declared_ports.push(Port {
                    name,
                    dir,
                    range: range.clone(),
                    is_reg,
                    loc,
                });
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(";")?;
            return Ok(());
        }
        if self.is_kw("wire") || self.is_kw("reg") || self.is_kw("integer") {
            let kind = match &self.advance().kind {
                TokenKind::Ident(s) if s == "wire" => NetKind::Wire,
                TokenKind::Ident(s) if s == "reg" => NetKind::Reg,
                _ => NetKind::Integer,
            };
            self.eat_kw("signed");
            let range = if kind != NetKind::Integer && self.is_sym("[") {
                Some(self.range()?)
            } else {
                None
            };
            loop {
                let (name, loc) = self.ident()?;
                if self.is_sym("[") {
                    return Err(self.unsupported("memory array"));
                }
                let is_port = m.port(&name).is_some() || declared_ports.iter().any(|p| p.name == name);
                if is_port || pending.iter().any(|(p, _)| *p == name) {
                    // Net kind redeclaration of a port.
                    if kind == NetKind::Reg {
                        if let Some(p) = m.ports.iter_mut().find(|p| p.name == name) {
                            p.is_reg = true;
                        } else if let Some(p) = declared_ports.iter_mut().find(|p| p.name == name) {
                            p.is_reg = true;
                        } else {
                            m.nets.push(NetDecl { name: name.clone(), kind, range: range.clone(), loc });
                        }
                    }
                } else if m.declares(&name) {
                    return Err(FrontendError::DuplicateDeclaration {
                        module: m.name.clone(),
                        name,
                    });
                } else {
                    m.nets.push(NetDecl {
                        name: name.clone(),
                        kind,
                        range: range.clone(),
                        loc,
                    });
                }
                if self.eat_sym("=") {
                    if kind != NetKind::Wire {
                        return Err(self.unsupported("variable initializer"));
                    }
                    let rhs = self.expr()?;
                    m.items.push(Item::Assign(ContAssign {
                        lhs: Expr::new(ExprKind::Ident(name), loc),
                        rhs,
                        loc,
                    }));
                }
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(";")?;
            return Ok(());
        }
        if self.is_kw("parameter") || self.is_kw("localparam") {
            let local = self.is_kw("localparam");
            self.advance();
            self.eat_kw("integer");
            self.eat_kw("signed");
            if self.is_sym("[") {
                self.range()?;
            }
            loop {
                let (name, loc) = self.ident()?;
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.push_param(m, ParamDecl { name, value, local, loc })?;
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(";")?;
            return Ok(());
        }
        if self.is_kw("assign") {
            let loc = self.advance().loc;
            if self.is_sym("#") {
                return Err(self.unsupported("delay control"));
            }
            loop {
                let lhs = self.lvalue()?;
                self.expect_sym("=")?;
                let rhs = self.expr()?;
                m.items.push(Item::Assign(ContAssign { lhs, rhs, loc }));
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(";")?;
            return Ok(());
        }
        if self.is_kw("always") {
            let loc = self.advance().loc;
            if !self.is_sym("@") {
                return Err(self.unsupported("always block without event control"));
            }
            let sensitivity = self.event_control()?;
            let body = self.stmt()?;
            m.items.push(Item::Always(AlwaysBlock {
                sensitivity,
                body,
                loc,
            }));
            return Ok(());
        }
        if matches!(self.peek().kind, TokenKind::Ident(_)) {
            return self.instances(m);
        }
        Err(self.error_here("expected module item"))
    }

    fn event_control(&mut self) -> Result<Sensitivity> {
        self.expect_sym("@")?;
        if self.eat_sym("*") {
            return Ok(Sensitivity::Star);
        }
        self.expect_sym("(")?;
        if self.eat_sym("*") {
            self.expect_sym(")")?;
            return Ok(Sensitivity::Star);
        }
        let mut items = Vec::new();
        loop {
            let edge = if self.eat_kw("posedge") {
                Some(Edge::Pos)
            } else if self.eat_kw("negedge") {
                Some(Edge::Neg)
            } else {
                None
            };
            let (signal, _) = self.ident()?;
            items.push(SensItem { edge, signal });
            if !(self.eat_kw("or") || self.eat_sym(",")) {
                break;
            }
        }
        self.expect_sym(")")?;
        Ok(Sensitivity::List(items))
    }

    fn instances(&mut self, m: &mut ModuleDecl) -> Result<()> {
        let (module, loc) = self.ident()?;
        let params = if self.eat_sym("#") {
            if !self.is_sym("(") {
                return Err(self.unsupported("delay control"));
            }
            self.advance();
            let p = if self.is_sym(".") {
                let mut named = Vec::new();
                loop {
                    self.expect_sym(".")?;
                    let (n, _) = self.ident()?;
                    self.expect_sym("(")?;
                    let v = self.expr()?;
                    self.expect_sym(")")?;
                    named.push((n, v));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                ParamOverrides::Named(named)
            } else {
                let mut pos = Vec::new();
                loop {
                    pos.push(self.expr()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                ParamOverrides::Positional(pos)
            };
            self.expect_sym(")")?;
            p
        } else {
            ParamOverrides::None
        };
        loop {
            let (name, _) = self.ident()?;
            if self.is_sym("[") {
                return Err(self.unsupported("instance array"));
            }
            self.expect_sym("(")?;
            let connections = if self.is_sym(".") {
                let mut named = Vec::new();
                loop {
                    self.expect_sym(".")?;
                    let (port, _) = self.ident()?;
                    self.expect_sym("(")?;
                    let e = if self.is_sym(")") { None } else { Some(self.expr()?) };
                    self.expect_sym(")")?;
                    named.push((port, e));
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                Connections::Named(named)
            } else {
                let mut pos = Vec::new();
                if !self.is_sym(")") {
                    loop {
                        if self.is_sym(",") || self.is_sym(")") {
                            pos.push(None);
                        } else {
                            pos.push(Some(self.expr()?));
                        }
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                }
                Connections::Positional(pos)
            };
            self.expect_sym(")")?;
            m.items.push(Item::Instance(Instance {
                module: module.clone(),
                name,
                params: params.clone(),
                connections,
                loc,
            }));
            if !self.eat_sym(",") {
                break;
            }
        }
        self.expect_sym(";")?;
        Ok(())
    }

    fn stmt(&mut self) -> Result<Stmt> {
        self.check_supported()?;
        let loc = self.loc();
        if self.eat_sym(";") {
            return Ok(Stmt::Null);
        }
        if self.is_sym("#") {
            return Err(self.unsupported("delay control"));
        }
        if self.is_sym("@") {
            return Err(self.unsupported("event control inside statement"));
        }
        if self.eat_kw("begin") {
            if self.eat_sym(":") {
                self.ident()?;
            }
            let mut stmts = Vec::new();
            while !self.eat_kw("end") {
                if self.at_eof() {
                    return Err(self.error_here("expected `end`"));
                }
                if self.is_kw("reg") || self.is_kw("integer") {
                    return Err(self.unsupported("block-local declaration"));
                }
                stmts.push(self.stmt()?);
            }
            return Ok(Stmt::Block(stmts));
        }
        if self.eat_kw("if") {
            self.expect_sym("(")?;
            let cond = self.expr()?;
            self.expect_sym(")")?;
            let then_branch = Box::new(self.stmt()?);
            let else_branch = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::If {
                cond,
                then_branch,
                else_branch,
                loc,
            });
        }
        let case_kind = if self.is_kw("case") {
            Some(CaseKind::Case)
        } else if self.is_kw("casez") {
            Some(CaseKind::Casez)
        } else if self.is_kw("casex") {
            Some(CaseKind::Casex)
        } else {
            None
        };
        if let Some(kind) = case_kind {
            self.advance();
            self.expect_sym("(")?;
            let subject = self.expr()?;
            self.expect_sym(")")?;
            let mut arms = Vec::new();
            let mut default = None;
            while !self.eat_kw("endcase") {
                if self.at_eof() {
                    return Err(self.error_here("expected `endcase`"));
                }
                if self.eat_kw("default") {
                    self.eat_sym(":");
                    if default.is_some() {
                        return Err(self.error_here("duplicate default arm"));
                    }
                    default = Some(Box::new(self.stmt()?));
                    continue;
                }
                let mut labels = Vec::new();
                loop {
                    labels.push(self.expr()?);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
                self.expect_sym(":")?;
                let body = self.stmt()?;
                arms.push(CaseArm { labels, body });
            }
            return Ok(Stmt::Case {
                kind,
                subject,
                arms,
                default,
                loc,
            });
        }
        let lhs = self.lvalue()?;
        let blocking = if self.eat_sym("=") {
            true
        } else if self.eat_sym("<=") {
            false
        } else {
            return Err(self.error_here("expected `=` or `<=`"));
        };
        if self.is_sym("#") {
            return Err(self.unsupported("intra-assignment delay"));
        }
        let rhs = self.expr()?;
        self.expect_sym(";")?;
        Ok(Stmt::Assign {
            lhs,
            rhs,
            blocking,
            loc,
        })
    }

    fn lvalue(&mut self) -> Result<Expr> {
        let loc = self.loc();
        if self.eat_sym("{") {
            let mut parts = Vec::new();
            loop {
                parts.push(self.lvalue()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym("}")?;
            return Ok(Expr::new(ExprKind::Concat(parts), loc));
        }
        let (name, loc) = self.ident()?;
        self.selects(Expr::new(ExprKind::Ident(name), loc))
    }

    fn selects(&mut self, base: Expr) -> Result<Expr> {
        if !self.is_sym("[") {
            return Ok(base);
        }
        let loc = self.advance().loc;
        let first = self.expr()?;
        let e = if self.eat_sym(":") {
            let lsb = self.expr()?;
            self.expect_sym("]")?;
            Expr::new(ExprKind::Slice(Box::new(base), Box::new(first), Box::new(lsb)), loc)
        } else if self.is_sym("+:") || self.is_sym("-:") {
            return Err(self.unsupported("indexed part-select"));
        } else {
            self.expect_sym("]")?;
            Expr::new(ExprKind::Index(Box::new(base), Box::new(first)), loc)
        };
        if self.is_sym("[") {
            return Err(self.unsupported("multi-dimensional select"));
        }
        Ok(e)
    }

    pub fn expr(&mut self) -> Result<Expr> {
        let cond = self.binary(1)?;
        if self.is_sym("?") {
            let loc = self.advance().loc;
            let t = self.expr()?;
            self.expect_sym(":")?;
            let f = self.expr()?;
            return Ok(Expr::new(
                ExprKind::Ternary(Box::new(cond), Box::new(t), Box::new(f)),
                loc,
            ));
        }
        Ok(cond)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        let TokenKind::Sym(s) = self.peek().kind else {
            return None;
        };
        Some(match s {
            "+" => BinaryOp::Add,
            "-" => BinaryOp::Sub,
            "*" => BinaryOp::Mul,
            "/" => BinaryOp::Div,
            "%" => BinaryOp::Mod,
            "<<" => BinaryOp::Shl,
            ">>" => BinaryOp::Shr,
            "<<<" => BinaryOp::AShl,
            ">>>" => BinaryOp::AShr,
            "<" => BinaryOp::Lt,
            ">" => BinaryOp::Gt,
            "<=" => BinaryOp::Le,
            ">=" => BinaryOp::Ge,
            "==" => BinaryOp::Eq,
            "!=" => BinaryOp::Ne,
            "===" => BinaryOp::CaseEq,
            "!==" => BinaryOp::CaseNe,
            "&" => BinaryOp::And,
            "|" => BinaryOp::Or,
            "^" => BinaryOp::Xor,
            "~^" | "^~" => BinaryOp::Xnor,
            "&&" => BinaryOp::LogicAnd,
            "||" => BinaryOp::LogicOr,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            let loc = self.advance().loc;
            let rhs = self.binary(prec + 1)?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        let loc = self.loc();
        let op = match self.peek().kind {
            TokenKind::Sym("~") => Some(UnaryOp::Not),
            TokenKind::Sym("!") => Some(UnaryOp::LogicNot),
            TokenKind::Sym("-") => Some(UnaryOp::Neg),
            TokenKind::Sym("+") => Some(UnaryOp::Plus),
            TokenKind::Sym("&") => Some(UnaryOp::RedAnd),
            TokenKind::Sym("|") => Some(UnaryOp::RedOr),
            TokenKind::Sym("^") => Some(UnaryOp::RedXor),
            TokenKind::Sym("~&") => Some(UnaryOp::RedNand),
            TokenKind::Sym("~|") => Some(UnaryOp::RedNor),
            TokenKind::Sym("~^") | TokenKind::Sym("^~") => Some(UnaryOp::RedXnor),
            _ => None,
        };
        if let Some(op) = op {
            self.advance();
            let operand = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary(op, Box::new(operand)), loc));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr> {
        self.check_supported()?;
        let loc = self.loc();
        match self.peek().kind.clone() {
            TokenKind::Number(lit) => {
                self.advance();
                Ok(Expr::new(ExprKind::Number(lit), loc))
            }
            TokenKind::Ident(name) if !RESERVED.contains(&name.as_str()) => {
                self.advance();
                if self.is_sym("(") {
                    return Err(self.unsupported("function call"));
                }
                self.selects(Expr::new(ExprKind::Ident(name), loc))
            }
            TokenKind::Sym("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            TokenKind::Sym("{") => {
                self.advance();
                let first = self.expr()?;
                if self.is_sym("{") {
                    self.advance();
                    let mut parts = Vec::new();
                    loop {
                        parts.push(self.expr()?);
                        if !self.eat_sym(",") {
                            break;
                        }
                    }
                    self.expect_sym("}")?;
                    self.expect_sym("}")?;
                    return Ok(Expr::new(ExprKind::Repeat(Box::new(first), parts), loc));
                }
                let mut parts = vec![first];
                while self.eat_sym(",") {
                    parts.push(self.expr()?);
                }
                self.expect_sym("}")?;
                Ok(Expr::new(ExprKind::Concat(parts), loc))
            }
            _ => Err(self.error_here("expected expression")),
        }
    }

    /// Checks that every referenced identifier is declared. Undeclared
    /// identifiers appearing in instance connections become implicit 1-bit wires.
    fn resolve_identifiers(&self, m: &mut ModuleDecl) -> Result<()> {
        let mut implicit: Vec<(String, Loc)> = Vec::new();
        for item in &m.items {
            let Item::Instance(inst) = item else { continue };
            let conns: Vec<&Expr> = match &inst.connections {
                Connections::Positional(v) => v.iter().flatten().collect(),
                Connections::Named(v) => v.iter().filter_map(|(_, e)| e.as_ref()).collect(),
            };
            for e in conns {
                e.walk(&mut |sub| {
                    if let ExprKind::Ident(n) = &sub.kind {
                        if !m.declares(n) && !implicit.iter().any(|(i, _)| i == n) {
                            implicit.push((n.clone(), sub.loc));
                        }
                    }
                });
            }
        }
        let known = |n: &str| m.declares(n) || implicit.iter().any(|(i, _)| i == n);
        let mut undeclared: Option<String> = None;
        let mut check = |e: &Expr| {
            e.walk(&mut |sub| {
                if let ExprKind::Ident(n) = &sub.kind {
                    if !known(n) && undeclared.is_none() {
                        undeclared = Some(n.clone());
                    }
                }
            });
        };
        for p in &m.params {
            check(&p.value);
        }
        for r in m.ports.iter().filter_map(|p| p.range.as_ref()).chain(m.nets.iter().filter_map(|n| n.range.as_ref())) {
            check(&r.msb);
            check(&r.lsb);
        }
        for item in &m.items {
            match item {
                Item::Assign(a) => {
                    check(&a.lhs);
                    check(&a.rhs);
                }
                Item::Always(a) => {
                    if let Sensitivity::List(list) = &a.sensitivity {
                        for s in list {
                            check(&Expr::ident(s.signal.clone()));
                        }
                    }
                    a.body.exprs(&mut |e, _| check(e));
                }
                Item::Instance(inst) => match &inst.params {
                    ParamOverrides::None => {}
                    ParamOverrides::Positional(v) => v.iter().for_each(&mut check),
                    ParamOverrides::Named(v) => v.iter().for_each(|(_, e)| check(e)),
                },
            }
        }
        if let Some(name) = undeclared {
            return Err(FrontendError::UndeclaredIdentifier {
                module: m.name.clone(),
                name,
            });
        }
        for (name, loc) in implicit {
            m.nets.push(NetDecl {
                name,
                kind: NetKind::Wire,
                range: None,
                loc,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_one(src: &str) -> ModuleDecl {
        let mut mods = parse_file("t.v", src).unwrap();
        assert_eq!(mods.len(), 1);
        mods.remove(0)
    }

    #[test]
    fn precedence_and_ternary() {
        let m = parse_one("module m(input a, b, c, output y); assign y = a | b & c ? a : b ^ c; endmodule");
        let Item::Assign(asg) = &m.items[0] else { panic!() };
        let ExprKind::Ternary(cond, _, f) = &asg.rhs.kind else { panic!("{:?}", asg.rhs) };
        assert!(matches!(cond.kind, ExprKind::Binary(BinaryOp::Or, _, _)));
        assert!(matches!(f.kind, ExprKind::Binary(BinaryOp::Xor, _, _)));
    }

    #[test]
    fn non_ansi_ports_with_reg() {
        let m = parse_one(
            "module m(clk, d, q);\n input clk; input [3:0] d; output [3:0] q; reg [3:0] q;\n always @(posedge clk) q <= d;\nendmodule",
        );
        assert_eq!(m.ports.len(), 3);
        assert!(m.port("q").unwrap().is_reg);
        assert!(m.nets.is_empty());
    }

    #[test]
    fn case_statement() {
        let m = parse_one(
            "module m(input [1:0] s, output reg y); always @* case (s) 2'b00, 2'b11: y = 1'b1; default: y = 1'b0; endcase endmodule",
        );
        let Item::Always(a) = &m.items[0] else { panic!() };
        assert_eq!(a.sensitivity, Sensitivity::Star);
        let Stmt::Case { arms, default, .. } = &a.body else { panic!() };
        assert_eq!(arms[0].labels.len(), 2);
        assert!(default.is_some());
    }

    #[test]
    fn unsupported_constructs() {
        for (src, feature) in [
            ("module m; generate endgenerate endmodule", "generate"),
            ("module m(input a, output b); assign #1 b = a; endmodule", "delay"),
            ("module m(input a, output b); and g(b, a, a); endmodule", "gate primitive"),
            ("module m; initial begin end endmodule", "initial"),
        ] {
            match parse_file("t.v", src) {
                Err(FrontendError::UnsupportedConstruct { feature: f, .. }) => {
                    assert!(f.contains(feature), "{f} vs {feature}")
                }
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn undeclared_identifier_rejected() {
        assert!(matches!(
            parse_file("t.v", "module m(output y); assign y = nope; endmodule"),
            Err(FrontendError::UndeclaredIdentifier { .. })
        ));
    }

    #[test]
    fn implicit_wire_from_instance_connection() {
        let m = parse_one("module m(input a, output y); inv u1(.a(a), .b(w)); assign y = w; endmodule");
        assert!(m.net("w").is_some());
    }

    #[test]
    fn duplicate_port_rejected() {
        assert!(matches!(
            parse_file("t.v", "module m(input a, output a); endmodule"),
            Err(FrontendError::DuplicateDeclaration { .. })
        ));
    }
}
