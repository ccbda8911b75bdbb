// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! A validated model compiled into numeric ids, with the reader indices
//! the refinement engine walks.

use std::collections::HashMap;
use std::fmt;

use crate::dsl::validate::{context_fn, Endpoint};
use crate::dsl::{
    load_model, print_model, slot_count, AggFn, BinOp, Cardinality, DiagnosticList, Expr, ExprKind,
    Func, MemberDef, MetaModel, PrimType,
};
use crate::refine::depgraph::{build_dependency_graph, DependencyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MemberId(pub u32);

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Expression with names resolved to member ids.
#[derive(Debug, Clone, PartialEq)]
pub enum CExpr {
    Double(f64),
    Long(i64),
    Bool(bool),
    Str(String),
    Timestamp,
    Local(MemberId),
    Path(MemberId, MemberId),
    Neg(Box<CExpr>),
    Binary(BinOp, Box<CExpr>, Box<CExpr>),
    Call(Func, Box<CExpr>),
    Agg(AggFn, MemberId, MemberId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MemberKind {
    Attribute(PrimType),
    Relation { target: ClassId, many: bool },
    Dependency { target: ClassId },
    Derived { ty: PrimType, expr: CExpr },
    Output { ty: PrimType },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemberInfo {
    pub class: ClassId,
    pub name: String,
    pub kind: MemberKind,
}

impl MemberInfo {
    /// Type of a member holding scalar values.
    pub fn value_type(&self) -> Option<PrimType> {
        match &self.kind {
            MemberKind::Attribute(t) | MemberKind::Derived { ty: t, .. } | MemberKind::Output { ty: t } => {
                Some(*t)
            }
            _ => None,
        }
    }

    /// Relations and dependencies both link to other nodes.
    pub fn link_target(&self) -> Option<(ClassId, bool)> {
        match self.kind {
            MemberKind::Relation { target, many } => Some((target, many)),
            MemberKind::Dependency { target } => Some((target, false)),
            _ => None,
        }
    }

    pub fn is_computed(&self) -> bool {
        matches!(self.kind, MemberKind::Derived { .. } | MemberKind::Output { .. })
    }
}

/// How a learned class draws its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedSpec {
    pub output: MemberId,
    /// Dependency or one-relation leading to the observed node.
    pub via: MemberId,
    /// Numeric attribute of the observed node.
    pub value: MemberId,
    pub context: Option<Func>,
    pub slots: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassInfo {
    pub name: String,
    pub members: Vec<MemberId>,
    pub learned: Option<LearnedSpec>,
    by_name: HashMap<String, MemberId>,
}

/// A computed member that must be refreshed when some member changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reader {
    /// `member` of the same node.
    Local(MemberId),
    /// `member` of every node linking to the changed node through `via`.
    Remote { member: MemberId, via: MemberId },
    /// The learned output of every node observing the changed node through `via`.
    Learned { output: MemberId, via: MemberId },
}

#[derive(Debug, Clone)]
pub struct Schema {
    model: MetaModel,
    text: String,
    classes: Vec<ClassInfo>,
    members: Vec<MemberInfo>,
    class_ids: HashMap<String, ClassId>,
    graph: DependencyGraph,
    ranks: Vec<u32>,
    readers: Vec<Vec<Reader>>,
    /// For each link member, the derived members of its class reading through it.
    link_readers: Vec<Vec<MemberId>>,
}

impl Schema {
    /// Parses, validates and compiles model text.
    pub fn parse(text: &str) -> Result<Schema, DiagnosticList> {
        load_model(text).map(Schema::compile)
    }

    /// Compiles a model that already passed validation.
    pub fn compile(model: MetaModel) -> Schema {
        let mut classes = Vec::new();
        let mut class_ids = HashMap::new();
        for (i, c) in model.classes.iter().enumerate() {
            class_ids.insert(c.name.clone(), ClassId(i as u32));
            classes.push(ClassInfo {
                name: c.name.clone(),
                members: Vec::new(),
                learned: None,
                by_name: HashMap::new(),
            });
        }
        let mut members = Vec::new();
        for (ci, c) in model.classes.iter().enumerate() {
            for m in &c.members {
                let Some(name) = m.name() else { continue };
                let kind = match m {
                    MemberDef::Attribute { ty, .. } => MemberKind::Attribute(*ty),
                    MemberDef::Relation {
                        target, cardinality, ..
                    } => MemberKind::Relation {
                        target: class_ids[target],
                        many: *cardinality == Cardinality::Many,
                    },
                    MemberDef::Dependency { target, .. } => MemberKind::Dependency {
                        target: class_ids[target],
                    },
                    MemberDef::Output { ty, .. } => MemberKind::Output { ty: *ty },
                    // Expressions are compiled once every member has an id.
                    MemberDef::Derived { ty, .. } => MemberKind::Derived {
                        ty: *ty,
                        expr: CExpr::Timestamp,
                    },
                    MemberDef::Input { .. } => unreachable!("inputs have no name"),
                };
                let id = MemberId(members.len() as u32);
                members.push(MemberInfo {
                    class: ClassId(ci as u32),
                    name: name.to_string(),
                    kind,
                });
                classes[ci].members.push(id);
                classes[ci].by_name.insert(name.to_string(), id);
            }
        }
        let mut s = Schema {
            text: print_model(&model),
            graph: build_dependency_graph(&model).expect("validated model is acyclic"),
            model,
            classes,
            members,
            class_ids,
            ranks: Vec::new(),
            readers: Vec::new(),
            link_readers: Vec::new(),
        };
        for ci in 0..s.model.classes.len() {
            let cid = ClassId(ci as u32);
            for m in &s.model.classes[ci].members {
                if let MemberDef::Derived { name, expr, .. } = m {
                    let compiled = s.compile_expr(cid, expr);
                    let id = s.classes[ci].by_name[name];
                    if let MemberKind::Derived { expr, .. } = &mut s.members[id.0 as usize].kind {
                        *expr = compiled;
                    }
                }
            }
            s.classes[ci].learned = s.learned_spec(cid);
        }
        s.index();
        s
    }

    fn compile_expr(&self, class: ClassId, e: &Expr) -> CExpr {
        let local = |n: &str| self.member_id(class, n).expect("validated member");
        let remote = |rel: &str, attr: &str| {
            let r = local(rel);
            let (target, _) = self.member(r).link_target().expect("validated link");
            (r, self.member_id(target, attr).expect("validated member"))
        };
        match &e.kind {
            ExprKind::Double(v) => CExpr::Double(*v),
            ExprKind::Long(v) => CExpr::Long(*v),
            ExprKind::Bool(v) => CExpr::Bool(*v),
            ExprKind::Str(v) => CExpr::Str(v.clone()),
            ExprKind::Timestamp => CExpr::Timestamp,
            ExprKind::Ref(n) => CExpr::Local(local(n)),
            ExprKind::Path(r, a) => {
                let (r, a) = remote(r, a);
                CExpr::Path(r, a)
            }
            ExprKind::Aggregate(f, r, a) => {
                let (r, a) = remote(r, a);
                CExpr::Agg(*f, r, a)
            }
            ExprKind::Neg(x) => CExpr::Neg(Box::new(self.compile_expr(class, x))),
            ExprKind::Binary(op, a, b) => CExpr::Binary(
                *op,
                Box::new(self.compile_expr(class, a)),
                Box::new(self.compile_expr(class, b)),
            ),
            ExprKind::Call(f, x) => CExpr::Call(*f, Box::new(self.compile_expr(class, x))),
        }
    }

    /// Compiles an ad-hoc expression (a query or metric) in the scope of
    /// `class`, checking every name it uses.
    pub fn resolve_expr(&self, class: ClassId, e: &Expr) -> Result<CExpr, String> {
        let cname = &self.class(class).name;
        let scalar = |c: ClassId, n: &str| match self.member_id(c, n) {
            Some(m) if self.member(m).value_type().is_some() => Ok(()),
            Some(_) => Err(format!("{}.{n} does not hold values", self.class(c).name)),
            None => Err(format!("{} has no member {n}", self.class(c).name)),
        };
        let link = |r: &str, many: bool, attr: &str| {
            let m = self.member_id(class, r).ok_or_else(|| format!("{cname} has no member {r}"))?;
            match self.member(m).link_target() {
                Some((target, is_many)) if is_many == many => scalar(target, attr),
                Some(_) if many => Err(format!("{cname}.{r} is not a many-relation")),
                Some(_) => Err(format!("{cname}.{r} links to many nodes; aggregate it")),
                None => Err(format!("{cname}.{r} is not a relation")),
            }
        };
        fn walk(e: &Expr, f: &mut dyn FnMut(&Expr) -> Result<(), String>) -> Result<(), String> {
            f(e)?;
            match &e.kind {
                ExprKind::Neg(x) | ExprKind::Call(_, x) => walk(x, f),
                ExprKind::Binary(_, a, b) => walk(a, f).and_then(|_| walk(b, f)),
                _ => Ok(()),
            }
        }
        walk(e, &mut |x| match &x.kind {
            ExprKind::Ref(n) => scalar(class, n),
            ExprKind::Path(r, a) => link(r, false, a),
            ExprKind::Aggregate(_, r, a) => link(r, true, a),
            _ => Ok(()),
        })?;
        Ok(self.compile_expr(class, e))
    }

    fn learned_spec(&self, class: ClassId) -> Option<LearnedSpec> {
        let def = &self.model.classes[class.0 as usize];
        def.algorithm.as_ref()?;
        let output = def.outputs().next()?.name()?;
        let output = self.member_id(class, output)?;
        let mut via = None;
        let mut value = None;
        let mut context = None;
        for sel in def.inputs() {
            let v = self.member_id(class, &sel.dependency)?;
            let (target, _) = self.member(v).link_target()?;
            via = Some(v);
            match (context_fn(&sel.expr), &sel.expr.kind) {
                (Some(f), _) => context = Some(f),
                (None, ExprKind::Ref(n)) => value = self.member_id(target, n),
                _ => {}
            }
        }
        let slots = match (context, def.resolution) {
            (Some(f), Some(r)) => slot_count(r, f).ok()?,
            _ => 1,
        };
        Some(LearnedSpec {
            output,
            via: via?,
            value: value?,
            context,
            slots,
        })
    }

    fn index(&mut self) {
        let n = self.members.len();
        self.ranks = vec![0; n];
        for (i, ep) in self.graph.order.iter().enumerate() {
            if let Some(id) = self.endpoint_id(ep) {
                self.ranks[id.0 as usize] = i as u32;
            }
        }
        let mut readers: Vec<Vec<Reader>> = vec![Vec::new(); n];
        let mut link_readers: Vec<Vec<MemberId>> = vec![Vec::new(); n];
        let push = |list: &mut Vec<Reader>, r: Reader| {
            if !list.contains(&r) {
                list.push(r);
            }
        };
        for id in 0..n {
            let reader = MemberId(id as u32);
            if let MemberKind::Derived { expr, .. } = &self.members[id].kind {
                let mut refs = Vec::new();
                collect_refs(expr, &mut refs);
                for r in refs {
                    match r {
                        Ref::Local(m) => push(&mut readers[m.0 as usize], Reader::Local(reader)),
                        Ref::Remote(via, m) => {
                            push(&mut readers[m.0 as usize], Reader::Remote { member: reader, via });
                            if !link_readers[via.0 as usize].contains(&reader) {
                                link_readers[via.0 as usize].push(reader);
                            }
                        }
                    }
                }
            }
        }
        for c in &self.classes {
            if let Some(l) = &c.learned {
                push(
                    &mut readers[l.value.0 as usize],
                    Reader::Learned {
                        output: l.output,
                        via: l.via,
                    },
                );
            }
        }
        self.readers = readers;
        self.link_readers = link_readers;
    }

    fn endpoint_id(&self, ep: &Endpoint) -> Option<MemberId> {
        self.member_id(self.class_id(&ep.class)?, &ep.member)
    }

    pub fn model(&self) -> &MetaModel {
        &self.model
    }

    /// Canonical model text.
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn dependency_graph(&self) -> &DependencyGraph {
        &self.graph
    }

    pub fn class_id(&self, name: &str) -> Option<ClassId> {
        self.class_ids.get(name).copied()
    }

    pub fn class(&self, id: ClassId) -> &ClassInfo {
        &self.classes[id.0 as usize]
    }

    pub fn classes(&self) -> impl Iterator<Item = (ClassId, &ClassInfo)> {
        self.classes.iter().enumerate().map(|(i, c)| (ClassId(i as u32), c))
    }

    pub fn member_id(&self, class: ClassId, name: &str) -> Option<MemberId> {
        self.classes.get(class.0 as usize)?.by_name.get(name).copied()
    }

    pub fn member(&self, id: MemberId) -> &MemberInfo {
        &self.members[id.0 as usize]
    }

    pub fn member_count(&self) -> usize {
        self.members.len()
    }

    /// Topological rank of a computed member.
    pub fn rank(&self, id: MemberId) -> u32 {
        self.ranks[id.0 as usize]
    }

    /// Computed members that read `id`.
    pub fn readers(&self, id: MemberId) -> &[Reader] {
        &self.readers[id.0 as usize]
    }

    /// Derived members reading through the link member `id`.
    pub fn link_readers(&self, id: MemberId) -> &[MemberId] {
        &self.link_readers[id.0 as usize]
    }

    /// `Class.member` for messages.
    pub fn qualified(&self, id: MemberId) -> String {
        let m = self.member(id);
        format!("{}.{}", self.class(m.class).name, m.name)
    }
}

enum Ref {
    Local(MemberId),
    Remote(MemberId, MemberId),
}

fn collect_refs(e: &CExpr, out: &mut Vec<Ref>) {
    match e {
        CExpr::Local(m) => out.push(Ref::Local(*m)),
        CExpr::Path(r, a) | CExpr::Agg(_, r, a) => out.push(Ref::Remote(*r, *a)),
        CExpr::Neg(x) | CExpr::Call(_, x) => collect_refs(x, out),
        CExpr::Binary(_, a, b) => {
            collect_refs(a, out);
            collect_refs(b, out);
        }
        _ => {}
    }
}
