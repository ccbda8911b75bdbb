// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::fmt;

use super::diag::Loc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimType {
    Double,
    Long,
    Bool,
    String,
}

impl PrimType {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "Double" => Some(PrimType::Double),
            "Long" => Some(PrimType::Long),
            "Bool" => Some(PrimType::Bool),
            "String" => Some(PrimType::String),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimType::Double => "Double",
            PrimType::Long => "Long",
            PrimType::Bool => "Bool",
            PrimType::String => "String",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, PrimType::Double | PrimType::Long)
    }
}

impl fmt::Display for PrimType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DurationUnit {
    Hour,
    Day,
    Week,
}

impl DurationUnit {
    pub fn millis(self) -> i64 {
        match self {
            DurationUnit::Hour => 3_600_000,
            DurationUnit::Day => 86_400_000,
            DurationUnit::Week => 604_800_000,
        }
    }

    fn word(self) -> &'static str {
        match self {
            DurationUnit::Hour => "hour",
            DurationUnit::Day => "day",
            DurationUnit::Week => "week",
        }
    }
}

/// A resolution such as `1week` or `24 hours`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DurationLiteral {
    pub count: u32,
    pub unit: DurationUnit,
}

impl DurationLiteral {
    pub fn new(count: u32, unit: DurationUnit) -> Self {
        DurationLiteral { count, unit }
    }

    pub fn millis(self) -> i64 {
        self.count as i64 * self.unit.millis()
    }

    /// Accepts `<count><unit>` with optional whitespace and an optional
    /// plural `s`, e.g. `1week`, `2 days`, `12hours`.
    pub fn parse(text: &str) -> Option<Self> {
        let s = text.trim();
        let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits == 0 {
            return None;
        }
        let count: u32 = s[..digits].parse().ok()?;
        if count == 0 {
            return None;
        }
        let rest = s[digits..].trim_start();
        let word = rest.strip_suffix('s').unwrap_or(rest);
        let unit = match word {
            "hour" => DurationUnit::Hour,
            "day" => DurationUnit::Day,
            "week" => DurationUnit::Week,
            _ => return None,
        };
        Some(DurationLiteral { count, unit })
    }
}

impl fmt::Display for DurationLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.count, self.unit.word())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cardinality {
    One,
    Many,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Hours,
    Days,
    Abs,
}

impl Func {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "HOURS" => Some(Func::Hours),
            "DAYS" => Some(Func::Days),
            "ABS" => Some(Func::Abs),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Hours => "HOURS",
            Func::Days => "DAYS",
            Func::Abs => "ABS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFn {
    Sum,
    Avg,
    Max,
}

impl AggFn {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "SUM" => Some(AggFn::Sum),
            "AVG" => Some(AggFn::Avg),
            "MAX" => Some(AggFn::Max),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AggFn::Sum => "SUM",
            AggFn::Avg => "AVG",
            AggFn::Max => "MAX",
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
    Double(f64),
    Long(i64),
    Bool(bool),
    Str(String),
    /// The trigger time of the evaluation, in epoch milliseconds.
    Timestamp,
    /// A member of the declaring class (or of the dependency target inside
    /// an input selector).
    Ref(String),
    /// `rel.attr` through a one-relation or dependency.
    Path(String, String),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    Aggregate(AggFn, String, String),
}

impl Expr {
    pub fn new(kind: ExprKind, loc: Loc) -> Self {
        Expr { kind, loc }
    }

    /// Visits this node and all sub-expressions, parents first.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Neg(e) | ExprKind::Call(_, e) => e.walk(f),
            ExprKind::Binary(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputSelector {
    pub dependency: String,
    pub dependency_loc: Loc,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemberDef {
    Attribute {
        name: String,
        ty: PrimType,
        loc: Loc,
    },
    Relation {
        name: String,
        target: String,
        cardinality: Cardinality,
        loc: Loc,
    },
    Dependency {
        name: String,
        target: String,
        loc: Loc,
    },
    Input {
        selector: InputSelector,
        loc: Loc,
    },
    Output {
        name: String,
        ty: PrimType,
        loc: Loc,
    },
    Derived {
        name: String,
        ty: PrimType,
        expr: Expr,
        loc: Loc,
    },
}

impl MemberDef {
    pub fn name(&self) -> Option<&str> {
        match self {
            MemberDef::Attribute { name, .. }
            | MemberDef::Relation { name, .. }
            | MemberDef::Dependency { name, .. }
            | MemberDef::Output { name, .. }
            | MemberDef::Derived { name, .. } => Some(name),
            MemberDef::Input { .. } => None,
        }
    }

    pub fn loc(&self) -> Loc {
        match self {
            MemberDef::Attribute { loc, .. }
            | MemberDef::Relation { loc, .. }
            | MemberDef::Dependency { loc, .. }
            | MemberDef::Input { loc, .. }
            | MemberDef::Output { loc, .. }
            | MemberDef::Derived { loc, .. } => *loc,
        }
    }

    /// Type of a member that holds a scalar value.
    pub fn value_type(&self) -> Option<PrimType> {
        match self {
            MemberDef::Attribute { ty, .. }
            | MemberDef::Output { ty, .. }
            | MemberDef::Derived { ty, .. } => Some(*ty),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub name: String,
    pub algorithm: Option<String>,
    pub resolution: Option<DurationLiteral>,
    pub members: Vec<MemberDef>,
    pub loc: Loc,
    pub algorithm_loc: Loc,
    pub resolution_loc: Loc,
}

impl ClassDef {
    pub fn new(name: impl Into<String>) -> Self {
        ClassDef {
            name: name.into(),
            algorithm: None,
            resolution: None,
            members: Vec::new(),
            loc: Loc::default(),
            algorithm_loc: Loc::default(),
            resolution_loc: Loc::default(),
        }
    }

    pub fn member(&self, name: &str) -> Option<&MemberDef> {
        self.members.iter().find(|m| m.name() == Some(name))
    }

    pub fn inputs(&self) -> impl Iterator<Item = &InputSelector> {
        self.members.iter().filter_map(|m| match m {
            MemberDef::Input { selector, .. } => Some(selector),
            _ => None,
        })
    }

    pub fn outputs(&self) -> impl Iterator<Item = &MemberDef> {
        self.members
            .iter()
            .filter(|m| matches!(m, MemberDef::Output { .. }))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaModel {
    pub classes: Vec<ClassDef>,
    index: BTreeMap<String, usize>,
}

impl MetaModel {
    /// Builds the model; on duplicate class names the first one is indexed.
    pub fn new(classes: Vec<ClassDef>) -> Self {
        let mut index = BTreeMap::new();
        for (i, c) in classes.iter().enumerate() {
            index.entry(c.name.clone()).or_insert(i);
        }
        MetaModel { classes, index }
    }

    pub fn class(&self, name: &str) -> Option<&ClassDef> {
        self.index.get(name).map(|&i| &self.classes[i])
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duration_parsing() {
        let w = DurationLiteral::parse("1week").unwrap();
        assert_eq!(w.millis(), 604_800_000);
        assert_eq!(w.to_string(), "1week");
        assert_eq!(
            DurationLiteral::parse("2 days"),
            Some(DurationLiteral::new(2, DurationUnit::Day))
        );
        assert_eq!(DurationLiteral::parse("12hours").unwrap().millis(), 43_200_000);
        assert_eq!(DurationLiteral::parse("0week"), None);
        assert_eq!(DurationLiteral::parse("week"), None);
        assert_eq!(DurationLiteral::parse("3 months"), None);
    }
}
