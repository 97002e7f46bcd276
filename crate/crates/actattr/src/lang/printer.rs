//! Canonical program text: 2-space indent per block level, explicit braces
//! even for empty bodies, `else` omitted when its body is empty. Parsing
//! the output reconstructs the same AST.

use super::ast::{Expr, Program, Stmt};

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    print_block(&p.statements, 0, &mut out);
    out
}

fn indent(depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn print_block(stmts: &[Stmt], depth: usize, out: &mut String) {
    for s in stmts {
        indent(depth, out);
        match s {
            Stmt::Let { name, value } => {
                out.push_str("let ");
                out.push_str(name);
                out.push_str(" = ");
                print_expr(value, out);
                out.push('\n');
            }
            Stmt::ForEach { var, list, body } => {
                out.push_str("for ");
                out.push_str(var);
                out.push_str(" in ");
                print_expr(list, out);
                out.push_str(" {\n");
                print_block(body, depth + 1, out);
                indent(depth, out);
                out.push_str("}\n");
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                out.push_str("if ");
                print_expr(cond, out);
                out.push_str(" {\n");
                print_block(then_body, depth + 1, out);
                indent(depth, out);
                out.push('}');
                if !else_body.is_empty() {
                    out.push_str(" else {\n");
                    print_block(else_body, depth + 1, out);
                    indent(depth, out);
                    out.push('}');
                }
                out.push('\n');
            }
            Stmt::Answer(e) => {
                out.push_str("answer ");
                print_expr(e, out);
                out.push('\n');
            }
            Stmt::Expr(e) => {
                print_expr(e, out);
                out.push('\n');
            }
        }
    }
}

pub fn print_expr(e: &Expr, out: &mut String) {
    match e {
        Expr::Number(n) => out.push_str(&format_number(*n)),
        Expr::Text(s) => {
            if super::ast::is_keyword_literal(s) {
                out.push_str(s);
            } else {
                print_quoted(s, out);
            }
        }
        Expr::Var(name) => out.push_str(name),
        Expr::Call { name, args } => {
            out.push_str(name);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                if name == "select_ordinal" && i == 3 {
                    out.push_str("row=");
                }
                print_expr(a, out);
            }
            out.push(')');
        }
        Expr::Compare { op, lhs, rhs } => {
            print_operand(lhs, out);
            out.push(' ');
            out.push_str(op.token());
            out.push(' ');
            print_operand(rhs, out);
        }
        Expr::ArgBest {
            dir,
            var,
            list,
            score,
        } => {
            out.push_str("argbest(");
            out.push_str(dir.token());
            out.push_str(", ");
            out.push_str(var);
            out.push_str(" in ");
            print_expr(list, out);
            out.push_str(", ");
            print_expr(score, out);
            out.push(')');
        }
    }
}

// Comparison operands parse as primaries, so a nested comparison needs
// parentheses to survive the round trip.
fn print_operand(e: &Expr, out: &mut String) {
    if matches!(e, Expr::Compare { .. }) {
        out.push('(');
        print_expr(e, out);
        out.push(')');
    } else {
        print_expr(e, out);
    }
}

/// Shortest decimal form that parses back to the same f64. Rust's `{}`
/// formatting guarantees the round trip.
pub fn format_number(n: f64) -> String {
    format!("{n}")
}

fn print_quoted(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            other => out.push(other),
        }
    }
    out.push('"');
}

/// Render a single expression (used by runtime errors to name the failing
/// node).
pub fn expr_snippet(e: &Expr) -> String {
    let mut s = String::new();
    print_expr(e, &mut s);
    s
}
