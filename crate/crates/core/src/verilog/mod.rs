//! Verilog front end: normalization, lexing, parsing, and hierarchy flattening
//! for a synthesizable subset of Verilog-2001.
//!
//! Supported: module declarations (ANSI and non-ANSI ports), `wire`/`reg`/
//! `integer`, `parameter`/`localparam`, continuous assigns, combinational and
//! clocked `always` blocks, `if`/`else`, `case`/`casez`/`casex`, the usual
//! unary/binary/ternary operators, concatenation, replication, bit and part
//! selects, and module instantiation. Anything else is rejected with
//! [`FrontendError::UnsupportedConstruct`].

pub mod ast;
mod error;
pub mod flatten;
mod lexer;
mod parser;
pub mod preprocess;
pub mod printer;

use std::path::Path;

pub use ast::*;
pub use error::{FrontendError, Result};
pub use flatten::{eval_const, flatten, FlatDesign, FlatSignal, SignalKind};
pub use printer::print_ast;

/// The files that make up one design plus the name of its top module.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    pub files: Vec<(String, String)>,
    pub top_module: String,
}

impl SourceUnit {
    pub fn single(path: impl Into<String>, text: impl Into<String>, top: impl Into<String>) -> Self {
        SourceUnit {
            files: vec![(path.into(), text.into())],
            top_module: top.into(),
        }
    }

    pub fn from_paths<P: AsRef<Path>>(paths: &[P], top: &str) -> std::io::Result<Self> {
        let mut files = Vec::with_capacity(paths.len());
        for p in paths {
            let text = std::fs::read_to_string(p)?;
            files.push((p.as_ref().display().to_string(), text));
        }
        Ok(SourceUnit {
            files,
            top_module: top.to_string(),
        })
    }
}

/// Parses every file of the unit. Module names must be unique across files.
pub fn parse(src: &SourceUnit) -> Result<Ast> {
    if src.files.is_empty() {
        return Err(FrontendError::EmptySource);
    }
    let mut ast = Ast::default();
    for (path, text) in &src.files {
        for m in parser::parse_file(path, text)? {
            if ast.module(&m.name).is_some() {
                return Err(FrontendError::DuplicateDeclaration {
                    module: path.clone(),
                    name: m.name,
                });
            }
            ast.modules.push(m);
        }
    }
    Ok(ast)
}

/// Parses and flattens in one step.
pub fn elaborate(src: &SourceUnit) -> Result<FlatDesign> {
    let ast = parse(src)?;
    flatten(&ast, &src.top_module)
}

/// Counts operator occurrences (by graph label) across item expressions.
pub fn operator_counts<'a>(items: impl IntoIterator<Item = &'a Item>) -> std::collections::BTreeMap<&'static str, usize> {
    let mut counts = std::collections::BTreeMap::new();
    let mut visit = |e: &Expr| {
        e.walk(&mut |sub| {
            let name = match &sub.kind {
                ExprKind::Unary(op, _) => op.name(),
                ExprKind::Binary(op, _, _) => op.name(),
                ExprKind::Ternary(..) => "Ternary",
                _ => return,
            };
            *counts.entry(name).or_insert(0) += 1;
        })
    };
    for item in items {
        match item {
            Item::Assign(a) => {
                visit(&a.lhs);
                visit(&a.rhs);
            }
            Item::Always(a) => a.body.exprs(&mut |e, _| visit(e)),
            Item::Instance(i) => match &i.connections {
                Connections::Positional(v) => v.iter().flatten().for_each(&mut visit),
                Connections::Named(v) => v.iter().filter_map(|(_, e)| e.as_ref()).for_each(&mut visit),
            },
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::fixtures::FULL_ADDER;

    fn unit(src: &str, top: &str) -> SourceUnit {
        SourceUnit::single("t.v", src, top)
    }

    #[test]
    fn inverter() {
        let ast = parse(&unit("module inv(input a, output b); assign b = ~a; endmodule", "inv")).unwrap();
        assert_eq!(ast.modules.len(), 1);
        let m = &ast.modules[0];
        assert_eq!(m.ports.len(), 2);
        assert_eq!(m.items.len(), 1);
        let Item::Assign(a) = &m.items[0] else { panic!() };
        match &a.rhs.kind {
            ExprKind::Unary(UnaryOp::Not, inner) => assert_eq!(inner.as_ident(), Some("a")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_adder_ports_and_assigns() {
        let ast = parse(&unit(FULL_ADDER, "full_adder")).unwrap();
        let m = ast.module("full_adder").unwrap();
        let names: Vec<&str> = m.ports.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "cin", "sum", "cout"]);
        let targets: Vec<&str> = m
            .items
            .iter()
            .map(|i| match i {
                Item::Assign(a) => a.lhs.as_ident().unwrap(),
                _ => panic!(),
            })
            .collect();
        assert_eq!(targets, ["sum", "cout"]);
    }

    #[test]
    fn stray_semicolon_is_located() {
        match parse(&unit("module m(; endmodule", "m")) {
            Err(FrontendError::Syntax { line, col, .. }) => assert_eq!((line, col), (1, 10)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flatten_without_instances_is_identity() {
        let ast = parse(&unit(FULL_ADDER, "full_adder")).unwrap();
        let flat = flatten(&ast, "full_adder").unwrap();
        assert_eq!(flat.items, ast.modules[0].items);
        assert_eq!(flat.signals.len(), 5);
    }

    #[test]
    fn flatten_inlines_inverter() {
        let src = "module inv(input a, output b); assign b = ~a; endmodule\n\
                   module top(input x, output y); inv u1(.a(x), .b(y)); endmodule";
        let flat = elaborate(&unit(src, "top")).unwrap();
        assert!(flat.signal("u1.b").is_some());
        assert!(flat.items.iter().all(|i| !matches!(i, Item::Instance(_))));
        let inlined = flat.items.iter().any(|i| match i {
            Item::Assign(a) => {
                a.lhs.as_ident() == Some("u1.b")
                    && matches!(&a.rhs.kind, ExprKind::Unary(UnaryOp::Not, x) if x.as_ident() == Some("u1.a"))
            }
            _ => false,
        });
        assert!(inlined);
    }

    #[test]
    fn self_instantiation_is_recursive() {
        let src = "module m(input a, output b); m inner(.a(a), .b(b)); endmodule";
        assert!(matches!(
            elaborate(&unit(src, "m")),
            Err(FrontendError::RecursiveInstantiation(_))
        ));
    }

    #[test]
    fn print_then_parse_is_stable() {
        let src = "module m(input clk, input rst, input [3:0] d, output reg [3:0] q, output y);\n\
                   parameter P = 4'd3;\n wire [3:0] t;\n assign t = {d[1:0], 2'b01} + P;\n\
                   assign y = &t ? d[0] : ~^d;\n\
                   always @(posedge clk or posedge rst) if (rst) q <= 0; else if (d > P) q <= t; else case (d) 1, 2: q <= {2{d[1:0]}}; default: ; endcase\n\
                   endmodule";
        let ast = parse(&unit(src, "m")).unwrap();
        let printed = print_ast(&ast);
        let reparsed = parse(&unit(&printed, "m")).unwrap();
        assert_eq!(print_ast(&reparsed), printed);
        assert_eq!(operator_counts(&reparsed.modules[0].items), operator_counts(&ast.modules[0].items));
    }
}
