// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::fmt::Write;

use super::ast::*;

/// Renders a model in canonical form. Re-parsing the output yields a model
/// structurally equal to `m`.
pub fn print_model(m: &MetaModel) -> String {
    let mut out = String::new();
    for (i, c) in m.classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_class(&mut out, c);
    }
    out
}

fn print_class(out: &mut String, c: &ClassDef) {
    let _ = writeln!(out, "class {} {{", c.name);
    if let Some(a) = &c.algorithm {
        let _ = writeln!(out, "    with {}", quote(a));
    }
    if let Some(r) = &c.resolution {
        let _ = writeln!(out, "    with resolution \"{r}\"");
    }
    for m in &c.members {
        out.push_str("  ");
        match m {
            MemberDef::Attribute { name, ty, .. } => {
                let _ = write!(out, "att {name}: {ty}");
            }
            MemberDef::Relation {
                name,
                target,
                cardinality,
                ..
            } => {
                let many = if *cardinality == Cardinality::Many { "[]" } else { "" };
                let _ = write!(out, "rel {name}: {target}{many}");
            }
            MemberDef::Dependency { name, target, .. } => {
                let _ = write!(out, "dependency {name}: {target}");
            }
            MemberDef::Input { selector, .. } => {
                let text = format!("{} | ={}", selector.dependency, print_expr(&selector.expr));
                let _ = write!(out, "input {}", quote(&text));
            }
            MemberDef::Output { name, ty, .. } => {
                let _ = write!(out, "output {name}: {ty}");
            }
            MemberDef::Derived { name, ty, expr, .. } => {
                let _ = write!(out, "derived {name}: {ty} = {}", print_expr(expr));
            }
        }
        out.push('\n');
    }
    out.push_str("}\n");
}

fn quote(s: &str) -> String {
    let mut q = String::with_capacity(s.len() + 2);
    q.push('"');
    for ch in s.chars() {
        match ch {
            '"' => q.push_str("\\\""),
            '\\' => q.push_str("\\\\"),
            '\n' => q.push_str("\\n"),
            '\t' => q.push_str("\\t"),
            c => q.push(c),
        }
    }
    q.push('"');
    q
}

pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn is_literal(e: &Expr) -> bool {
    matches!(e.kind, ExprKind::Double(_) | ExprKind::Long(_))
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::Double(v) => {
            let _ = write!(out, "{v:?}");
        }
        ExprKind::Long(v) => {
            let _ = write!(out, "{v}");
        }
        ExprKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ExprKind::Str(s) => out.push_str(&quote(s)),
        ExprKind::Timestamp => out.push_str("timestamp"),
        ExprKind::Ref(n) => out.push_str(n),
        ExprKind::Path(r, a) => {
            let _ = write!(out, "{r}.{a}");
        }
        ExprKind::Neg(inner) => {
            out.push('-');
            // `-2.0` would re-parse as a literal and `--x` is fine, but a
            // binary operand or literal needs explicit grouping.
            let group = is_literal(inner) || matches!(inner.kind, ExprKind::Binary(..));
            if group {
                out.push('(');
            }
            write_expr(out, inner);
            if group {
                out.push(')');
            }
        }
        ExprKind::Binary(op, a, b) => {
            let p = op.precedence();
            let left_group = matches!(&a.kind, ExprKind::Binary(o, ..) if o.precedence() < p);
            let right_group = matches!(&b.kind, ExprKind::Binary(o, ..) if o.precedence() <= p);
            write_operand(out, a, left_group);
            let _ = write!(out, " {} ", op.symbol());
            write_operand(out, b, right_group);
        }
        ExprKind::Call(f, arg) => {
            let _ = write!(out, "{}(", f.name());
            write_expr(out, arg);
            out.push(')');
        }
        ExprKind::Aggregate(f, r, a) => {
            let _ = write!(out, "{}({r}.{a})", f.name());
        }
    }
}

fn write_operand(out: &mut String, e: &Expr, group: bool) {
    if group {
        out.push('(');
    }
    write_expr(out, e);
    if group {
        out.push(')');
    }
}
