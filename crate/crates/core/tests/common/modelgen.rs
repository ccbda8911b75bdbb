// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Random generator of valid models for round-trip and validation tests.

use mda_core::dsl::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

fn e(kind: ExprKind) -> Expr {
    Expr::new(kind, Loc::default())
}

struct ClassInfo {
    name: String,
    atts: Vec<(String, PrimType)>,
    derived: Vec<(String, PrimType)>,
}

struct Ctx<'a> {
    infos: &'a [ClassInfo],
    index: usize,
    local: Vec<(String, PrimType)>,
    rels: Vec<(String, usize, Cardinality)>,
}

impl Ctx<'_> {
    /// Numeric members of class `j` this class may read without creating a
    /// class-level cycle.
    fn readable(&self, j: usize) -> Vec<(String, PrimType)> {
        let info = &self.infos[j];
        let mut v: Vec<_> = info.atts.iter().filter(|(_, t)| t.is_numeric()).cloned().collect();
        if j < self.index {
            v.extend(info.derived.iter().filter(|(_, t)| t.is_numeric()).cloned());
        }
        v
    }
}

fn literal_double(rng: &mut impl Rng) -> f64 {
    match rng.random_range(0..5) {
        0 => rng.random_range(-100..100) as f64,
        1 => rng.random_range(-1.0..1.0),
        2 => 1.0 / rng.random_range(1..50) as f64,
        3 => rng.random_range(1.0..1e6) * 10f64.powi(rng.random_range(-12..12)),
        _ => rng.random_range(0.0..10.0),
    }
}

fn gen_num(rng: &mut impl Rng, ctx: &Ctx, depth: u32) -> (Expr, PrimType) {
    if depth == 0 || rng.random_bool(0.35) {
        return gen_leaf(rng, ctx);
    }
    match rng.random_range(0..6) {
        0..=2 => {
            let (a, ta) = gen_num(rng, ctx, depth - 1);
            let (b, tb) = gen_num(rng, ctx, depth - 1);
            let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][rng.random_range(0..4)];
            let t = if ta == PrimType::Long && tb == PrimType::Long {
                PrimType::Long
            } else {
                PrimType::Double
            };
            (e(ExprKind::Binary(op, Box::new(a), Box::new(b))), t)
        }
        3 => {
            let (a, t) = gen_num(rng, ctx, depth - 1);
            (e(ExprKind::Neg(Box::new(a))), t)
        }
        4 => {
            let (a, t) = gen_num(rng, ctx, depth - 1);
            (e(ExprKind::Call(Func::Abs, Box::new(a))), t)
        }
        _ => {
            let f = if rng.random_bool(0.5) { Func::Hours } else { Func::Days };
            (e(ExprKind::Call(f, Box::new(e(ExprKind::Timestamp)))), PrimType::Long)
        }
    }
}

fn gen_leaf(rng: &mut impl Rng, ctx: &Ctx) -> (Expr, PrimType) {
    for _ in 0..8 {
        match rng.random_range(0..7) {
            0 => return (e(ExprKind::Double(literal_double(rng))), PrimType::Double),
            1 => return (e(ExprKind::Long(rng.random_range(-1000..1000))), PrimType::Long),
            2 => return (e(ExprKind::Timestamp), PrimType::Long),
            3 | 4 => {
                let nums: Vec<_> = ctx.local.iter().filter(|(_, t)| t.is_numeric()).collect();
                if let Some((n, t)) = nums.choose(rng) {
                    return (e(ExprKind::Ref(n.clone())), *t);
                }
            }
            5 => {
                let ones: Vec<_> = ctx.rels.iter().filter(|r| r.2 == Cardinality::One).collect();
                if let Some((r, j, _)) = ones.choose(rng) {
                    if let Some((a, t)) = ctx.readable(*j).choose(rng) {
                        return (e(ExprKind::Path(r.clone(), a.clone())), *t);
                    }
                }
            }
            _ => {
                let many: Vec<_> = ctx.rels.iter().filter(|r| r.2 == Cardinality::Many).collect();
                if let Some((r, j, _)) = many.choose(rng) {
                    if let Some((a, t)) = ctx.readable(*j).choose(rng) {
                        let f = [AggFn::Sum, AggFn::Avg, AggFn::Max][rng.random_range(0..3)];
                        let rt = if f == AggFn::Avg { PrimType::Double } else { *t };
                        return (e(ExprKind::Aggregate(f, r.clone(), a.clone())), rt);
                    }
                }
            }
        }
    }
    (e(ExprKind::Long(rng.random_range(0..10))), PrimType::Long)
}

const RESOLUTIONS: &[(u32, DurationUnit, Func)] = &[
    (1, DurationUnit::Week, Func::Hours),
    (1, DurationUnit::Day, Func::Hours),
    (1, DurationUnit::Week, Func::Days),
    (2, DurationUnit::Day, Func::Hours),
    (12, DurationUnit::Hour, Func::Hours),
    (3, DurationUnit::Week, Func::Days),
];

const STRINGS: &[&str] = &["", "plain", "with \"quotes\"", "back\\slash", "tab\there", "line\nbreak", "ünïcode"];

/// A random model that passes validation.
pub fn random_model(rng: &mut impl Rng) -> MetaModel {
    let n = rng.random_range(1..=5);
    let types = [PrimType::Double, PrimType::Double, PrimType::Long, PrimType::Bool, PrimType::String];
    let mut infos: Vec<ClassInfo> = (0..n)
        .map(|i| ClassInfo {
            name: format!("C{i}"),
            atts: (0..rng.random_range(1..=3))
                .map(|k| (format!("a{k}"), types[rng.random_range(0..types.len())]))
                .collect(),
            derived: Vec::new(),
        })
        .collect();
    let mut classes = Vec::new();
    for i in 0..n {
        let mut members = Vec::new();
        for (name, ty) in &infos[i].atts {
            members.push(MemberDef::Attribute {
                name: name.clone(),
                ty: *ty,
                loc: Loc::default(),
            });
        }
        let mut rels = Vec::new();
        for (j, info) in infos.iter().enumerate().take(n) {
            if rng.random_bool(0.45) {
                let card = if rng.random_bool(0.5) { Cardinality::One } else { Cardinality::Many };
                let name = format!("r{j}");
                members.push(MemberDef::Relation {
                    name: name.clone(),
                    target: info.name.clone(),
                    cardinality: card,
                    loc: Loc::default(),
                });
                rels.push((name, j, card));
            }
        }
        let mut derived = Vec::new();
        let mut local = infos[i].atts.clone();
        for k in 0..rng.random_range(0..=3) {
            let name = format!("d{k}");
            let (expr, ty) = match rng.random_range(0..8) {
                0 => (e(ExprKind::Bool(rng.random_bool(0.5))), PrimType::Bool),
                1 => (
                    e(ExprKind::Str(STRINGS[rng.random_range(0..STRINGS.len())].to_string())),
                    PrimType::String,
                ),
                _ => {
                    let ctx = Ctx {
                        infos: &infos,
                        index: i,
                        local: local.clone(),
                        rels: rels.clone(),
                    };
                    let (expr, t) = gen_num(rng, &ctx, 3);
                    let declared = if t == PrimType::Long && rng.random_bool(0.5) {
                        PrimType::Long
                    } else {
                        PrimType::Double
                    };
                    (expr, declared)
                }
            };
            members.push(MemberDef::Derived {
                name: name.clone(),
                ty,
                expr,
                loc: Loc::default(),
            });
            local.push((name.clone(), ty));
            derived.push((name, ty));
        }
        infos[i].derived = derived;

        let mut class = ClassDef::new(infos[i].name.clone());
        let sources: Vec<(usize, String)> = (0..n)
            .flat_map(|j| {
                infos[j]
                    .atts
                    .iter()
                    .filter(|(_, t)| t.is_numeric())
                    .map(move |(a, _)| (j, a.clone()))
            })
            .collect();
        if !sources.is_empty() && rng.random_bool(0.3) {
            let (j, att) = sources.choose(rng).unwrap().clone();
            class.algorithm = Some("GaussianMixture".to_string());
            members.push(MemberDef::Dependency {
                name: "src".to_string(),
                target: infos[j].name.clone(),
                loc: Loc::default(),
            });
            members.push(MemberDef::Input {
                selector: InputSelector {
                    dependency: "src".to_string(),
                    dependency_loc: Loc::default(),
                    expr: e(ExprKind::Ref(att)),
                },
                loc: Loc::default(),
            });
            if rng.random_bool(0.7) {
                let (count, unit, f) = RESOLUTIONS[rng.random_range(0..RESOLUTIONS.len())];
                class.resolution = Some(DurationLiteral::new(count, unit));
                members.push(MemberDef::Input {
                    selector: InputSelector {
                        dependency: "src".to_string(),
                        dependency_loc: Loc::default(),
                        expr: e(ExprKind::Call(f, Box::new(e(ExprKind::Timestamp)))),
                    },
                    loc: Loc::default(),
                });
            }
            members.push(MemberDef::Output {
                name: "p".to_string(),
                ty: PrimType::Double,
                loc: Loc::default(),
            });
        }
        // Member order is free; derived formulas only name earlier or raw
        // members, so any permutation stays valid.
        members.shuffle(rng);
        class.members = members;
        classes.push(class);
    }
    MetaModel::new(classes)
}
