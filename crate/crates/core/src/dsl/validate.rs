// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, HashMap, HashSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use super::ast::*;
use super::diag::{DiagKind, Diagnostic, DiagnosticList, Loc};

pub const GAUSSIAN_MIXTURE: &str = "GaussianMixture";

const RESERVED: &[&str] = &["timestamp", "true", "false"];

/// Runs every model rule. An empty result means the model is valid.
pub fn validate(m: &MetaModel) -> DiagnosticList {
    let mut diags = check_names(m);
    if !diags.is_empty() {
        sort(&mut diags);
        return diags;
    }
    for c in &m.classes {
        check_structure(m, c, &mut diags);
        check_types(m, c, &mut diags);
    }
    check_cycles(m, &mut diags);
    sort(&mut diags);
    diags
}

fn sort(diags: &mut DiagnosticList) {
    diags.sort_by_key(|d| (d.line, d.col));
}

/// Duplicate names, unresolved relation/dependency targets and selectors
/// naming an unknown dependency.
pub fn check_names(m: &MetaModel) -> DiagnosticList {
    let mut diags = Vec::new();
    let mut seen: HashMap<&str, Loc> = HashMap::new();
    for c in &m.classes {
        if let Some(first) = seen.get(c.name.as_str()) {
            diags.push(Diagnostic::error(
                DiagKind::DuplicateName,
                c.loc,
                format!("duplicate class `{}` (first declared at {first})", c.name),
            ));
        } else {
            seen.insert(&c.name, c.loc);
        }
        if PrimType::from_name(&c.name).is_some() {
            diags.push(Diagnostic::error(
                DiagKind::DuplicateName,
                c.loc,
                format!("class name `{}` clashes with a primitive type", c.name),
            ));
        }
    }
    for c in &m.classes {
        let mut members: HashMap<&str, Loc> = HashMap::new();
        for mem in &c.members {
            if let Some(name) = mem.name() {
                if let Some(first) = members.get(name) {
                    diags.push(Diagnostic::error(
                        DiagKind::DuplicateName,
                        mem.loc(),
                        format!("duplicate member `{name}` in class `{}` (first declared at {first})", c.name),
                    ));
                } else {
                    members.insert(name, mem.loc());
                }
                if RESERVED.contains(&name) {
                    diags.push(Diagnostic::error(
                        DiagKind::DuplicateName,
                        mem.loc(),
                        format!("`{name}` is reserved and cannot name a member"),
                    ));
                }
            }
            match mem {
                MemberDef::Relation { target, loc, .. } | MemberDef::Dependency { target, loc, .. } => {
                    if m.class(target).is_none() {
                        diags.push(Diagnostic::error(
                            DiagKind::UnresolvedType,
                            *loc,
                            format!("unresolved class `{target}`"),
                        ));
                    }
                }
                MemberDef::Input { selector, .. } => {
                    let known = matches!(
                        c.member(&selector.dependency),
                        Some(MemberDef::Dependency { .. }) | Some(MemberDef::Relation { .. })
                    );
                    if !known {
                        diags.push(Diagnostic::error(
                            DiagKind::UnknownDependency,
                            selector.dependency_loc,
                            format!(
                                "selector references unknown dependency `{}` in class `{}`",
                                selector.dependency, c.name
                            ),
                        ));
                    }
                }
                _ => {}
            }
        }
    }
    diags
}

/// Whether `e` is exactly `HOURS(timestamp)` or `DAYS(timestamp)`.
pub fn context_fn(e: &Expr) -> Option<Func> {
    match &e.kind {
        ExprKind::Call(f @ (Func::Hours | Func::Days), arg)
            if matches!(arg.kind, ExprKind::Timestamp) =>
        {
            Some(*f)
        }
        _ => None,
    }
}

/// Number of context slots for a resolution and a context function.
pub fn slot_count(resolution: DurationLiteral, context: Func) -> Result<u32, String> {
    let granularity = match context {
        Func::Hours => DurationUnit::Hour.millis(),
        Func::Days => DurationUnit::Day.millis(),
        Func::Abs => return Err("ABS is not a context function".to_string()),
    };
    let res = resolution.millis();
    if res < granularity || res % granularity != 0 {
        return Err(format!(
            "resolution {resolution} is not a whole number of {}",
            if context == Func::Hours { "hours" } else { "days" }
        ));
    }
    Ok((res / granularity) as u32)
}

fn err(diags: &mut DiagnosticList, kind: DiagKind, loc: Loc, msg: String) {
    diags.push(Diagnostic::error(kind, loc, msg));
}

fn check_structure(m: &MetaModel, c: &ClassDef, diags: &mut DiagnosticList) {
    let inputs: Vec<(&InputSelector, Loc)> = c
        .members
        .iter()
        .filter_map(|mem| match mem {
            MemberDef::Input { selector, loc } => Some((selector, *loc)),
            _ => None,
        })
        .collect();
    let outputs: Vec<&MemberDef> = c.outputs().collect();
    if c.resolution.is_some() && c.algorithm.is_none() {
        err(
            diags,
            DiagKind::Structure,
            c.resolution_loc,
            format!("class `{}` declares a resolution without an algorithm", c.name),
        );
    }
    let Some(algorithm) = &c.algorithm else {
        if let Some((sel, _)) = inputs.first() {
            err(
                diags,
                DiagKind::Structure,
                sel.dependency_loc,
                format!("class `{}` declares inputs but no algorithm", c.name),
            );
        }
        if let Some(o) = outputs.first() {
            err(
                diags,
                DiagKind::Structure,
                o.loc(),
                format!("class `{}` declares an output but no algorithm", c.name),
            );
        }
        return;
    };
    if inputs.is_empty() {
        err(
            diags,
            DiagKind::Structure,
            c.loc,
            format!("learned class `{}` needs at least one input", c.name),
        );
    }
    if outputs.len() != 1 {
        let loc = outputs.get(1).map(|o| o.loc()).unwrap_or(c.loc);
        err(
            diags,
            DiagKind::Structure,
            loc,
            format!(
                "learned class `{}` must declare exactly one output, found {}",
                c.name,
                outputs.len()
            ),
        );
    }
    if algorithm != GAUSSIAN_MIXTURE {
        err(
            diags,
            DiagKind::Structure,
            c.algorithm_loc,
            format!("unsupported algorithm \"{algorithm}\" (supported: \"{GAUSSIAN_MIXTURE}\")"),
        );
        return;
    }
    if let Some(MemberDef::Output { ty, loc, .. }) = outputs.first() {
        if *ty != PrimType::Double {
            err(
                diags,
                DiagKind::TypeMismatch,
                *loc,
                format!("{GAUSSIAN_MIXTURE} output must be Double, found {ty}"),
            );
        }
    }
    if inputs.is_empty() {
        return;
    }
    let dep = &inputs[0].0.dependency;
    for (sel, _) in &inputs[1..] {
        if sel.dependency != *dep {
            err(
                diags,
                DiagKind::Structure,
                sel.dependency_loc,
                format!("all inputs of `{}` must use the same dependency `{dep}`", c.name),
            );
        }
    }
    if let Some(MemberDef::Relation {
        cardinality: Cardinality::Many,
        ..
    }) = c.member(dep)
    {
        err(
            diags,
            DiagKind::Structure,
            inputs[0].0.dependency_loc,
            format!("learned inputs must come from a dependency or single relation, `{dep}` is many-valued"),
        );
    }
    let target = dependency_target(m, c, dep);
    let mut values = Vec::new();
    let mut contexts = Vec::new();
    for (sel, _) in &inputs {
        if let Some(f) = context_fn(&sel.expr) {
            contexts.push((f, sel.expr.loc));
        } else {
            values.push(sel);
        }
    }
    if values.len() != 1 {
        let loc = values.get(1).map(|s| s.expr.loc).unwrap_or(c.loc);
        err(
            diags,
            DiagKind::Structure,
            loc,
            format!(
                "{GAUSSIAN_MIXTURE} class `{}` needs exactly one value input, found {}",
                c.name,
                values.len()
            ),
        );
    }
    if let Some(sel) = values.first() {
        let raw = match (&sel.expr.kind, target) {
            (ExprKind::Ref(name), Some(t)) => matches!(
                t.member(name),
                Some(MemberDef::Attribute { ty, .. }) if ty.is_numeric()
            ),
            (_, None) => true,
            _ => false,
        };
        if !raw {
            err(
                diags,
                DiagKind::Structure,
                sel.expr.loc,
                format!("{GAUSSIAN_MIXTURE} value input must name a numeric `att` of the dependency target"),
            );
        }
    }
    if contexts.len() > 1 {
        err(
            diags,
            DiagKind::Structure,
            contexts[1].1,
            format!("class `{}` has more than one context input", c.name),
        );
    }
    match (contexts.first(), c.resolution) {
        (Some((f, loc)), Some(res)) => {
            if let Err(msg) = slot_count(res, *f) {
                err(diags, DiagKind::Structure, *loc, msg);
            }
        }
        (Some((_, loc)), None) => err(
            diags,
            DiagKind::Structure,
            *loc,
            format!("class `{}` uses a context input but declares no resolution", c.name),
        ),
        _ => {}
    }
}

fn dependency_target<'m>(m: &'m MetaModel, c: &ClassDef, dep: &str) -> Option<&'m ClassDef> {
    match c.member(dep)? {
        MemberDef::Dependency { target, .. } | MemberDef::Relation { target, .. } => m.class(target),
        _ => None,
    }
}

/// Where names inside an expression resolve.
#[derive(Clone, Copy)]
pub enum Scope<'a> {
    /// A derived formula of `class`.
    Derived(&'a ClassDef),
    /// An input selector; names resolve in the dependency target.
    Selector(&'a ClassDef),
}

fn check_types(m: &MetaModel, c: &ClassDef, diags: &mut DiagnosticList) {
    for mem in &c.members {
        match mem {
            MemberDef::Derived { name, ty, expr, .. } => {
                if let Some(found) = type_of(m, Scope::Derived(c), expr, diags) {
                    if !assignable(*ty, found) {
                        err(
                            diags,
                            DiagKind::TypeMismatch,
                            expr.loc,
                            format!("derived `{}.{name}` is declared {ty} but its formula has type {found}", c.name),
                        );
                    }
                }
            }
            MemberDef::Input { selector, .. } => {
                if let Some(t) = dependency_target(m, c, &selector.dependency) {
                    type_of(m, Scope::Selector(t), &selector.expr, diags);
                }
            }
            _ => {}
        }
    }
}

pub fn assignable(declared: PrimType, found: PrimType) -> bool {
    declared == found || (declared == PrimType::Double && found == PrimType::Long)
}

fn value_member(
    class: &ClassDef,
    name: &str,
    loc: Loc,
    diags: &mut DiagnosticList,
) -> Option<PrimType> {
    match class.member(name) {
        Some(mem) => match mem.value_type() {
            Some(t) => Some(t),
            None => {
                err(
                    diags,
                    DiagKind::UnknownMember,
                    loc,
                    format!("`{}.{name}` is not a value member", class.name),
                );
                None
            }
        },
        None => {
            err(
                diags,
                DiagKind::UnknownMember,
                loc,
                format!("class `{}` has no member `{name}`", class.name),
            );
            None
        }
    }
}

/// Type of `e` in `scope`; reports problems into `diags` and returns `None`
/// for ill-typed expressions.
pub fn type_of(m: &MetaModel, scope: Scope, e: &Expr, diags: &mut DiagnosticList) -> Option<PrimType> {
    match &e.kind {
        ExprKind::Double(_) => Some(PrimType::Double),
        ExprKind::Long(_) => Some(PrimType::Long),
        ExprKind::Bool(_) => Some(PrimType::Bool),
        ExprKind::Str(_) => Some(PrimType::String),
        ExprKind::Timestamp => Some(PrimType::Long),
        ExprKind::Ref(name) => {
            let class = match scope {
                Scope::Derived(c) | Scope::Selector(c) => c,
            };
            value_member(class, name, e.loc, diags)
        }
        ExprKind::Path(rel, attr) => {
            let Scope::Derived(c) = scope else {
                err(
                    diags,
                    DiagKind::Structure,
                    e.loc,
                    "selectors may only reference attributes of the dependency target".to_string(),
                );
                return None;
            };
            let target = match c.member(rel) {
                Some(MemberDef::Dependency { target, .. })
                | Some(MemberDef::Relation {
                    target,
                    cardinality: Cardinality::One,
                    ..
                }) => m.class(target)?,
                Some(MemberDef::Relation { .. }) => {
                    err(
                        diags,
                        DiagKind::TypeMismatch,
                        e.loc,
                        format!("`{rel}` is many-valued; use SUM, AVG or MAX"),
                    );
                    return None;
                }
                _ => {
                    err(
                        diags,
                        DiagKind::UnknownMember,
                        e.loc,
                        format!("class `{}` has no relation or dependency `{rel}`", c.name),
                    );
                    return None;
                }
            };
            value_member(target, attr, e.loc, diags)
        }
        ExprKind::Aggregate(f, rel, attr) => {
            let Scope::Derived(c) = scope else {
                err(
                    diags,
                    DiagKind::Structure,
                    e.loc,
                    format!("aggregate {} is not allowed in an input selector", f.name()),
                );
                return None;
            };
            let target = match c.member(rel) {
                Some(MemberDef::Relation {
                    target,
                    cardinality: Cardinality::Many,
                    ..
                }) => m.class(target)?,
                Some(MemberDef::Relation { .. }) | Some(MemberDef::Dependency { .. }) => {
                    err(
                        diags,
                        DiagKind::TypeMismatch,
                        e.loc,
                        format!("{} needs a many-relation, `{rel}` is single-valued", f.name()),
                    );
                    return None;
                }
                _ => {
                    err(
                        diags,
                        DiagKind::UnknownMember,
                        e.loc,
                        format!("class `{}` has no relation `{rel}`", c.name),
                    );
                    return None;
                }
            };
            let t = value_member(target, attr, e.loc, diags)?;
            if !t.is_numeric() {
                err(
                    diags,
                    DiagKind::TypeMismatch,
                    e.loc,
                    format!("{} needs a numeric attribute, `{}.{attr}` is {t}", f.name(), target.name),
                );
                return None;
            }
            Some(match f {
                AggFn::Avg => PrimType::Double,
                AggFn::Sum | AggFn::Max => t,
            })
        }
        ExprKind::Neg(inner) => {
            let t = type_of(m, scope, inner, diags)?;
            numeric(t, e.loc, "negation", diags)
        }
        ExprKind::Binary(op, a, b) => {
            let ta = type_of(m, scope, a, diags);
            let tb = type_of(m, scope, b, diags);
            let (ta, tb) = (ta?, tb?);
            let what = format!("operator `{}`", op.symbol());
            numeric(ta, e.loc, &what, diags)?;
            numeric(tb, e.loc, &what, diags)?;
            if ta == PrimType::Long && tb == PrimType::Long {
                Some(PrimType::Long)
            } else {
                Some(PrimType::Double)
            }
        }
        ExprKind::Call(f, arg) => {
            let t = type_of(m, scope, arg, diags)?;
            match f {
                Func::Hours | Func::Days => {
                    if t != PrimType::Long {
                        err(
                            diags,
                            DiagKind::TypeMismatch,
                            e.loc,
                            format!("{} expects a Long timestamp, found {t}", f.name()),
                        );
                        return None;
                    }
                    Some(PrimType::Long)
                }
                Func::Abs => numeric(t, e.loc, "ABS", diags),
            }
        }
    }
}

fn numeric(t: PrimType, loc: Loc, what: &str, diags: &mut DiagnosticList) -> Option<PrimType> {
    if t.is_numeric() {
        Some(t)
    } else {
        err(
            diags,
            DiagKind::TypeMismatch,
            loc,
            format!("{what} needs numeric operands, found {t}"),
        );
        None
    }
}

/// A class-level member endpoint, `Class.member`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub class: String,
    pub member: String,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.class, self.member)
    }
}

fn ep(class: &str, member: &str) -> Endpoint {
    Endpoint {
        class: class.to_string(),
        member: member.to_string(),
    }
}

/// Attribute references of `e`, resolved to class-level endpoints. A
/// selector's `timestamp` yields the pseudo endpoint `Target.timestamp`.
pub fn expr_references(scope: Scope, e: &Expr) -> Vec<Endpoint> {
    let mut out = Vec::new();
    e.walk(&mut |x| match (&x.kind, scope) {
        (ExprKind::Ref(n), Scope::Derived(c) | Scope::Selector(c)) => out.push(ep(&c.name, n)),
        (ExprKind::Timestamp, Scope::Selector(t)) => out.push(ep(&t.name, "timestamp")),
        (ExprKind::Path(r, a) | ExprKind::Aggregate(_, r, a), Scope::Derived(c)) => {
            if let Some(MemberDef::Relation { target, .. } | MemberDef::Dependency { target, .. }) =
                c.member(r)
            {
                out.push(ep(target, a));
            }
        }
        _ => {}
    });
    out
}

/// Class-level dependency edges `(source, dependent)`, in declaration order,
/// without duplicates.
pub fn dependency_edges(m: &MetaModel) -> Vec<(Endpoint, Endpoint)> {
    let mut edges = Vec::new();
    let mut seen = HashSet::new();
    for c in &m.classes {
        let outputs: Vec<&str> = c.outputs().filter_map(|o| o.name()).collect();
        for mem in &c.members {
            let (refs, dependents): (Vec<Endpoint>, Vec<&str>) = match mem {
                MemberDef::Derived { name, expr, .. } => {
                    (expr_references(Scope::Derived(c), expr), vec![name.as_str()])
                }
                MemberDef::Input { selector, .. } => match dependency_target(m, c, &selector.dependency) {
                    Some(t) => (expr_references(Scope::Selector(t), &selector.expr), outputs.clone()),
                    None => continue,
                },
                _ => continue,
            };
            for d in dependents {
                for r in &refs {
                    let e = (r.clone(), ep(&c.name, d));
                    if seen.insert(e.clone()) {
                        edges.push(e);
                    }
                }
            }
        }
    }
    edges
}

fn check_cycles(m: &MetaModel, diags: &mut DiagnosticList) {
    let edges = dependency_edges(m);
    let mut g: DiGraph<Endpoint, ()> = DiGraph::new();
    let mut ids: BTreeMap<Endpoint, NodeIndex> = BTreeMap::new();
    let mut id = |g: &mut DiGraph<Endpoint, ()>, e: &Endpoint| {
        *ids.entry(e.clone()).or_insert_with(|| g.add_node(e.clone()))
    };
    // Edges point from a member to what it depends on, so a path reads as
    // "depends on".
    for (src, dst) in &edges {
        let a = id(&mut g, dst);
        let b = id(&mut g, src);
        g.add_edge(a, b, ());
    }
    for scc in tarjan_scc(&g) {
        let cyclic = scc.len() > 1 || g.contains_edge(scc[0], scc[0]);
        if !cyclic {
            continue;
        }
        let members: HashSet<NodeIndex> = scc.iter().copied().collect();
        let start = *scc
            .iter()
            .min_by_key(|n| decl_position(m, &g[**n]))
            .expect("non-empty component");
        let path = cycle_path(&g, start, &members);
        let names: Vec<String> = path.iter().map(|n| g[*n].to_string()).collect();
        let loc = decl_loc(m, &g[start]);
        err(
            diags,
            DiagKind::Cycle,
            loc,
            format!("dependency cycle: {} -> {}", names.join(" -> "), g[start]),
        );
    }
}

fn decl_position(m: &MetaModel, e: &Endpoint) -> (usize, usize) {
    let ci = m.class_index(&e.class).unwrap_or(usize::MAX);
    let mi = m
        .class(&e.class)
        .and_then(|c| c.members.iter().position(|x| x.name() == Some(e.member.as_str())))
        .unwrap_or(usize::MAX);
    (ci, mi)
}

fn decl_loc(m: &MetaModel, e: &Endpoint) -> Loc {
    m.class(&e.class)
        .and_then(|c| c.member(&e.member).map(|x| x.loc()).or(Some(c.loc)))
        .unwrap_or_default()
}

/// A simple cycle through `start` that stays inside one strongly connected
/// component.
fn cycle_path(g: &DiGraph<Endpoint, ()>, start: NodeIndex, scc: &HashSet<NodeIndex>) -> Vec<NodeIndex> {
    let mut prev: HashMap<NodeIndex, NodeIndex> = HashMap::new();
    let mut queue = std::collections::VecDeque::new();
    let mut succ: Vec<NodeIndex> = g.neighbors(start).filter(|n| scc.contains(n)).collect();
    succ.sort();
    for n in succ {
        if n == start {
            return vec![start];
        }
        if let std::collections::hash_map::Entry::Vacant(v) = prev.entry(n) {
            v.insert(start);
            queue.push_back(n);
        }
    }
    while let Some(n) = queue.pop_front() {
        let mut succ: Vec<NodeIndex> = g.neighbors(n).filter(|x| scc.contains(x)).collect();
        succ.sort();
        for s in succ {
            if s == start {
                let mut path = vec![n];
                let mut cur = n;
                while let Some(&p) = prev.get(&cur) {
                    path.push(p);
                    if p == start {
                        break;
                    }
                    cur = p;
                }
                path.reverse();
                return path;
            }
            if let std::collections::hash_map::Entry::Vacant(v) = prev.entry(s) {
                v.insert(n);
                queue.push_back(s);
            }
        }
    }
    vec![start]
}
