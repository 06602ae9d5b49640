//! Pretty-printer producing parseable Verilog from an [`Ast`].

use std::fmt::Write;

use super::ast::*;

pub fn print_ast(ast: &Ast) -> String {
    let mut out = String::new();
    for (i, m) in ast.modules.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_module(&mut out, m);
    }
    out
}

pub fn print_module(out: &mut String, m: &ModuleDecl) {
    write!(out, "module {}", m.name).unwrap();
    if m.ports.is_empty() {
        out.push_str(";\n");
    } else {
        out.push_str(" (\n");
        for (i, p) in m.ports.iter().enumerate() {
            write!(out, "  {}", p.dir.keyword()).unwrap();
            if p.is_reg {
                out.push_str(" reg");
            }
            if let Some(r) = &p.range {
                write!(out, " {}", range(r)).unwrap();
            }
            write!(out, " {}", p.name).unwrap();
            out.push_str(if i + 1 < m.ports.len() { ",\n" } else { "\n" });
        }
        out.push_str(");\n");
    }
    for p in &m.params {
        let kw = if p.local { "localparam" } else { "parameter" };
        writeln!(out, "  {kw} {} = {};", p.name, expr(&p.value)).unwrap();
    }
    for n in &m.nets {
        write!(out, "  {}", n.kind.keyword()).unwrap();
        if let Some(r) = &n.range {
            write!(out, " {}", range(r)).unwrap();
        }
        writeln!(out, " {};", n.name).unwrap();
    }
    for item in &m.items {
        match item {
            Item::Assign(a) => writeln!(out, "  assign {} = {};", expr(&a.lhs), expr(&a.rhs)).unwrap(),
            Item::Always(a) => {
                let sens = match &a.sensitivity {
                    Sensitivity::Star => "*".to_string(),
                    Sensitivity::List(list) => list
                        .iter()
                        .map(|s| match s.edge {
                            Some(Edge::Pos) => format!("posedge {}", s.signal),
                            Some(Edge::Neg) => format!("negedge {}", s.signal),
                            None => s.signal.clone(),
                        })
                        .collect::<Vec<_>>()
                        .join(" or "),
                };
                write!(out, "  always @({sens})").unwrap();
                stmt(out, &a.body, 1, true);
            }
            Item::Instance(inst) => {
                write!(out, "  {}", inst.module).unwrap();
                match &inst.params {
                    ParamOverrides::None => {}
                    ParamOverrides::Positional(v) => {
                        let list: Vec<String> = v.iter().map(expr).collect();
                        write!(out, " #({})", list.join(", ")).unwrap();
                    }
                    ParamOverrides::Named(v) => {
                        let list: Vec<String> = v.iter().map(|(n, e)| format!(".{n}({})", expr(e))).collect();
                        write!(out, " #({})", list.join(", ")).unwrap();
                    }
                }
                let conns: Vec<String> = match &inst.connections {
                    Connections::Positional(v) => v
                        .iter()
                        .map(|e| e.as_ref().map(expr).unwrap_or_default())
                        .collect(),
                    Connections::Named(v) => v
                        .iter()
                        .map(|(n, e)| format!(".{n}({})", e.as_ref().map(expr).unwrap_or_default()))
                        .collect(),
                };
                writeln!(out, " {} ({});", inst.name, conns.join(", ")).unwrap();
            }
        }
    }
    out.push_str("endmodule\n");
}

fn range(r: &Range) -> String {
    format!("[{}:{}]", expr(&r.msb), expr(&r.lsb))
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

/// Prints a statement. `inline` means the caller already emitted the
/// introducing keyword on the current line.
fn stmt(out: &mut String, s: &Stmt, level: usize, inline: bool) {
    if inline {
        out.push(' ');
    } else {
        indent(out, level);
    }
    match s {
        Stmt::Block(stmts) => {
            out.push_str("begin\n");
            for st in stmts {
                stmt(out, st, level + 1, false);
            }
            indent(out, level);
            out.push_str("end\n");
        }
        Stmt::If {
            cond,
            then_branch,
            else_branch,
            ..
        } => {
            write!(out, "if ({})", expr(cond)).unwrap();
            // Wrapping in begin/end avoids dangling-else ambiguity on re-parse.
            stmt(out, &as_block(then_branch), level, true);
            if let Some(e) = else_branch {
                indent(out, level);
                out.push_str("else");
                if matches!(**e, Stmt::If { .. }) {
                    out.push(' ');
                    let mut nested = String::new();
                    stmt(&mut nested, e, level, true);
                    out.push_str(nested.trim_start());
                } else {
                    stmt(out, &as_block(e), level, true);
                }
            }
        }
        Stmt::Case {
            kind,
            subject,
            arms,
            default,
            ..
        } => {
            writeln!(out, "{} ({})", kind.keyword(), expr(subject)).unwrap();
            for arm in arms {
                indent(out, level + 1);
                let labels: Vec<String> = arm.labels.iter().map(expr).collect();
                write!(out, "{}:", labels.join(", ")).unwrap();
                stmt(out, &arm.body, level + 1, true);
            }
            if let Some(d) = default {
                indent(out, level + 1);
                out.push_str("default:");
                stmt(out, d, level + 1, true);
            }
            indent(out, level);
            out.push_str("endcase\n");
        }
        Stmt::Assign { lhs, rhs, blocking, .. } => {
            let op = if *blocking { "=" } else { "<=" };
            writeln!(out, "{} {op} {};", expr(lhs), expr(rhs)).unwrap();
        }
        Stmt::Null => out.push_str(";\n"),
    }
}

fn as_block(s: &Stmt) -> Stmt {
    match s {
        Stmt::Block(_) => s.clone(),
        other => Stmt::Block(vec![other.clone()]),
    }
}

pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Ident(n) => n.clone(),
        ExprKind::Number(l) => l.text.clone(),
        ExprKind::Unary(op, x) => format!("{}{}", op.symbol(), operand(x)),
        ExprKind::Binary(op, l, r) => format!("{} {} {}", operand(l), op.symbol(), operand(r)),
        ExprKind::Ternary(c, t, f) => format!("{} ? {} : {}", operand(c), operand(t), operand(f)),
        ExprKind::Concat(parts) => {
            let p: Vec<String> = parts.iter().map(expr).collect();
            format!("{{{}}}", p.join(", "))
        }
        ExprKind::Repeat(n, parts) => {
            let p: Vec<String> = parts.iter().map(expr).collect();
            format!("{{{}{{{}}}}}", operand(n), p.join(", "))
        }
        ExprKind::Index(b, i) => format!("{}[{}]", expr(b), expr(i)),
        ExprKind::Slice(b, m, l) => format!("{}[{}:{}]", expr(b), expr(m), expr(l)),
    }
}

fn operand(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Binary(..) | ExprKind::Ternary(..) | ExprKind::Unary(..) => format!("({})", expr(e)),
        _ => expr(e),
    }
}
