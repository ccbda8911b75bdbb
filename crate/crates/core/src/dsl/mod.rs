// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! The modeling language: classes with attributes, relations, derived
//! formulas and learned members.

pub mod ast;
pub mod diag;
pub mod lexer;
pub mod parser;
pub mod printer;
pub mod validate;

pub use ast::*;
pub use diag::{has_errors, DiagKind, Diagnostic, DiagnosticList, Loc, Severity};
pub use parser::{parse_expr, parse_model, parse_syntax};
pub use printer::{print_expr, print_model};
pub use validate::{slot_count, validate};

/// Parses and validates in one step.
pub fn load_model(text: &str) -> Result<MetaModel, DiagnosticList> {
    let m = parse_model(text)?;
    let diags = validate(&m);
    if diags.is_empty() {
        Ok(m)
    } else {
        Err(diags)
    }
}
