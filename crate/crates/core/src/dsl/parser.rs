// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use super::ast::*;
use super::diag::{DiagKind, Diagnostic, DiagnosticList, Loc};
use super::lexer::{tokenize, Tok, Token};
use super::validate;

type PResult<T> = Result<T, Diagnostic>;

/// Parses model text. Syntax errors, duplicate names, unresolved types and
/// selectors naming an unknown dependency are reported here; the remaining
/// rules are checked by [`validate::validate`].
pub fn parse_model(text: &str) -> Result<MetaModel, DiagnosticList> {
    let model = parse_syntax(text)?;
    let diags = validate::check_names(&model);
    if diags.is_empty() {
        Ok(model)
    } else {
        Err(diags)
    }
}

/// Parses model text without resolving names, so a fragment that refers to
/// classes declared elsewhere still yields its AST.
pub fn parse_syntax(text: &str) -> Result<MetaModel, DiagnosticList> {
    let toks = tokenize(text, Loc::new(1, 1)).map_err(|d| vec![d])?;
    let mut p = Parser { toks, pos: 0 };
    let mut classes = Vec::new();
    let mut diags = Vec::new();
    while !p.at_eof() {
        match p.class_decl() {
            Ok(c) => classes.push(c),
            Err(d) => {
                diags.push(d);
                p.recover();
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    Ok(MetaModel::new(classes))
}

/// Parses a standalone expression, e.g. a what-if metric.
pub fn parse_expr(text: &str) -> Result<Expr, Diagnostic> {
    parse_expr_at(text, Loc::new(1, 1))
}

fn parse_expr_at(text: &str, origin: Loc) -> PResult<Expr> {
    let toks = tokenize(text, origin)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.unexpected("end of expression"));
    }
    Ok(e)
}

/// Parses the body of an `input` string. `origin` is the location of the
/// first character inside the quotes.
pub(crate) fn parse_selector(text: &str, origin: Loc) -> PResult<InputSelector> {
    let chars: Vec<char> = text.chars().collect();
    let shape = "input selector must have the form \"dependency | =expression\"";
    let bar = chars
        .iter()
        .position(|&c| c == '|')
        .ok_or_else(|| Diagnostic::error(DiagKind::Syntax, origin, shape))?;
    let lead = chars[..bar].iter().take_while(|c| c.is_whitespace()).count();
    let dep: String = chars[lead..bar].iter().collect::<String>().trim_end().to_string();
    let dependency_loc = origin.offset(lead as u32);
    let ident_ok = dep
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && dep.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ident_ok {
        return Err(Diagnostic::error(DiagKind::Syntax, dependency_loc, shape));
    }
    let mut i = bar + 1;
    while i < chars.len() && chars[i].is_whitespace() {
        i += 1;
    }
    if chars.get(i) != Some(&'=') {
        return Err(Diagnostic::error(
            DiagKind::Syntax,
            origin.offset(i.min(chars.len().saturating_sub(1)) as u32),
            "expected `=` after `|` in input selector",
        ));
    }
    let body: String = chars[i + 1..].iter().collect();
    let expr = parse_expr_at(&body, origin.offset(i as u32 + 1))?;
    Ok(InputSelector {
        dependency: dep,
        dependency_loc,
        expr,
    })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn loc(&self) -> Loc {
        self.toks[self.pos].loc
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, wanted: &str) -> Diagnostic {
        Diagnostic::error(
            DiagKind::Syntax,
            self.loc(),
            format!("expected {}, found {}", wanted, self.peek().describe()),
        )
    }

    fn expect(&mut self, tok: Tok, wanted: &str) -> PResult<Loc> {
        if *self.peek() == tok {
            Ok(self.advance().loc)
        } else {
            Err(self.unexpected(wanted))
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn ident(&mut self, wanted: &str) -> PResult<(String, Loc)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.advance().loc)),
            _ => Err(self.unexpected(wanted)),
        }
    }

    fn string(&mut self, wanted: &str) -> PResult<(String, Loc)> {
        match self.peek().clone() {
            Tok::Str(s) => Ok((s, self.advance().loc)),
            _ => Err(self.unexpected(wanted)),
        }
    }

    /// Skips to the next `class` keyword after a syntax error.
    fn recover(&mut self) {
        self.advance();
        while !self.at_eof() && !self.is_keyword("class") {
            self.advance();
        }
    }

    fn class_decl(&mut self) -> PResult<ClassDef> {
        if !self.is_keyword("class") {
            return Err(self.unexpected("`class`"));
        }
        let loc = self.advance().loc;
        let (name, _) = self.ident("class name")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut class = ClassDef::new(name);
        class.loc = loc;
        while self.is_keyword("with") {
            let with_loc = self.advance().loc;
            if self.is_keyword("resolution") {
                self.advance();
                let (text, sloc) = self.string("resolution string")?;
                if class.resolution.is_some() {
                    return Err(Diagnostic::error(
                        DiagKind::Syntax,
                        with_loc,
                        "duplicate resolution clause",
                    ));
                }
                let d = DurationLiteral::parse(&text).ok_or_else(|| {
                    Diagnostic::error(
                        DiagKind::Syntax,
                        sloc,
                        format!("invalid resolution \"{text}\" (expected e.g. \"1week\", \"24hours\")"),
                    )
                })?;
                class.resolution = Some(d);
                class.resolution_loc = sloc;
            } else {
                let (text, sloc) = self.string("algorithm string or `resolution`")?;
                if class.algorithm.is_some() {
                    return Err(Diagnostic::error(
                        DiagKind::Syntax,
                        with_loc,
                        "duplicate algorithm clause",
                    ));
                }
                class.algorithm = Some(text);
                class.algorithm_loc = sloc;
            }
        }
        while !matches!(self.peek(), Tok::RBrace) {
            let m = self.member()?;
            class.members.push(m);
        }
        self.advance();
        Ok(class)
    }

    fn prim_type(&mut self) -> PResult<PrimType> {
        let (name, loc) = self.ident("type name")?;
        PrimType::from_name(&name).ok_or_else(|| {
            Diagnostic::error(
                DiagKind::UnresolvedType,
                loc,
                format!("unknown type `{name}` (expected Double, Long, Bool or String)"),
            )
        })
    }

    fn member(&mut self) -> PResult<MemberDef> {
        let kw = match self.peek() {
            Tok::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("member declaration or `}`")),
        };
        let loc = self.loc();
        match kw.as_str() {
            "att" => {
                self.advance();
                let (name, _) = self.ident("attribute name")?;
                self.expect(Tok::Colon, "`:`")?;
                let ty = self.prim_type()?;
                Ok(MemberDef::Attribute { name, ty, loc })
            }
            "rel" => {
                self.advance();
                let (name, _) = self.ident("relation name")?;
                self.expect(Tok::Colon, "`:`")?;
                let (target, _) = self.ident("class name")?;
                let cardinality = if matches!(self.peek(), Tok::LBracket) {
                    self.advance();
                    self.expect(Tok::RBracket, "`]`")?;
                    Cardinality::Many
                } else {
                    Cardinality::One
                };
                Ok(MemberDef::Relation {
                    name,
                    target,
                    cardinality,
                    loc,
                })
            }
            "dependency" => {
                self.advance();
                let (name, _) = self.ident("dependency name")?;
                self.expect(Tok::Colon, "`:`")?;
                let (target, _) = self.ident("class name")?;
                Ok(MemberDef::Dependency { name, target, loc })
            }
            "input" => {
                self.advance();
                let (text, sloc) = self.string("selector string")?;
                let selector = parse_selector(&text, sloc.offset(1))?;
                Ok(MemberDef::Input { selector, loc })
            }
            "output" => {
                self.advance();
                let (name, _) = self.ident("output name")?;
                self.expect(Tok::Colon, "`:`")?;
                let ty = self.prim_type()?;
                Ok(MemberDef::Output { name, ty, loc })
            }
            "derived" => {
                self.advance();
                let (name, _) = self.ident("derived attribute name")?;
                self.expect(Tok::Colon, "`:`")?;
                let ty = self.prim_type()?;
                self.expect(Tok::Eq, "`=`")?;
                let expr = self.expr()?;
                Ok(MemberDef::Derived {
                    name,
                    ty,
                    expr,
                    loc,
                })
            }
            "with" => Err(Diagnostic::error(
                DiagKind::Syntax,
                loc,
                "`with` clauses must precede all members",
            )),
            _ => Err(self.unexpected("member declaration (att, rel, dependency, input, output, derived)")),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            let loc = self.advance().loc;
            let rhs = self.term()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc);
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            let loc = self.advance().loc;
            let rhs = self.unary()?;
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), loc);
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if !matches!(self.peek(), Tok::Minus) {
            return self.primary();
        }
        let loc = self.advance().loc;
        match *self.peek() {
            Tok::Double(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Double(-v), loc))
            }
            Tok::Long(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Long(-v), loc))
            }
            _ => {
                let inner = self.unary()?;
                Ok(Expr::new(ExprKind::Neg(Box::new(inner)), loc))
            }
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        match self.peek().clone() {
            Tok::Double(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Double(v), loc))
            }
            Tok::Long(v) => {
                self.advance();
                Ok(Expr::new(ExprKind::Long(v), loc))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::new(ExprKind::Str(s), loc))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.advance();
                if matches!(self.peek(), Tok::LParen) {
                    return self.call(name, loc);
                }
                match name.as_str() {
                    "true" => return Ok(Expr::new(ExprKind::Bool(true), loc)),
                    "false" => return Ok(Expr::new(ExprKind::Bool(false), loc)),
                    "timestamp" => return Ok(Expr::new(ExprKind::Timestamp, loc)),
                    _ => {}
                }
                if matches!(self.peek(), Tok::Dot) {
                    self.advance();
                    let (attr, _) = self.ident("attribute name after `.`")?;
                    return Ok(Expr::new(ExprKind::Path(name, attr), loc));
                }
                Ok(Expr::new(ExprKind::Ref(name), loc))
            }
            _ => Err(self.unexpected("expression")),
        }
    }

    fn call(&mut self, name: String, loc: Loc) -> PResult<Expr> {
        self.advance();
        let kind = if let Some(f) = Func::from_name(&name) {
            let arg = self.expr()?;
            ExprKind::Call(f, Box::new(arg))
        } else if let Some(agg) = AggFn::from_name(&name) {
            let (rel, _) = self.ident("relation name")?;
            let wanted = format!("`.` ({} takes `relation.attribute`)", agg.name());
            self.expect(Tok::Dot, &wanted)?;
            let (attr, _) = self.ident("attribute name")?;
            ExprKind::Aggregate(agg, rel, attr)
        } else {
            return Err(Diagnostic::error(
                DiagKind::Syntax,
                loc,
                format!("unknown function `{name}`"),
            ));
        };
        self.expect(Tok::RParen, "`)`")?;
        Ok(Expr::new(kind, loc))
    }
}
