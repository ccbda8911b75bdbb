// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Randomized instance graphs and write schedules over generated models.

use std::collections::{BTreeMap, BTreeSet};

use mda_core::dsl::{validate::dependency_edges, PrimType};
use mda_core::graph::{NodeId, Store, StoreConfig, Value, WorldId, WriteReceipt};
use mda_core::profiler::ProfilerConfig;
use mda_core::refine::refine;
use mda_core::schema::{MemberId, MemberKind, Schema};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const HOUR: i64 = 3_600_000;

/// Every computed `(node, member)` reachable from a write, found by walking
/// class-level edges and every link that ever existed.
pub fn brute_force_dependents(
    s: &Store,
    w: WorldId,
    r: &WriteReceipt,
    links: &BTreeSet<(NodeId, NodeId)>,
) -> Vec<(NodeId, MemberId)> {
    let schema = s.schema();
    let edges = dependency_edges(schema.model());
    let class_of = |n: NodeId| s.node_class(n).unwrap().to_string();
    let nodes = s.nodes(w).unwrap();
    let id = |n: NodeId, name: &str| schema.member_id(s.node_meta(n).unwrap().class, name);
    let mut start: Vec<(NodeId, String)> = Vec::new();
    let written = schema.member(r.member);
    if written.link_target().is_some() {
        // Every computed member of the linking node may read through it.
        for m in &schema.class(written.class).members {
            if schema.member(*m).is_computed() {
                start.push((r.node, schema.member(*m).name.clone()));
            }
        }
        let mut seen: BTreeSet<(NodeId, String)> = BTreeSet::new();
        let mut out = BTreeSet::new();
        let mut stack = start;
        while let Some(k) = stack.pop() {
            if !seen.insert(k.clone()) {
                continue;
            }
            out.insert((k.0, id(k.0, &k.1).unwrap()));
            stack.extend(step(&edges, &k, &nodes, links, &class_of));
        }
        return out.into_iter().collect();
    }
    let mut seen = BTreeSet::new();
    let mut stack = step(&edges, &(r.node, written.name.clone()), &nodes, links, &class_of);
    let mut out = BTreeSet::new();
    while let Some(k) = stack.pop() {
        if !seen.insert(k.clone()) {
            continue;
        }
        out.insert((k.0, id(k.0, &k.1).unwrap()));
        stack.extend(step(&edges, &k, &nodes, links, &class_of));
    }
    out.into_iter().collect()
}

pub fn step(
    edges: &[(mda_core::dsl::validate::Endpoint, mda_core::dsl::validate::Endpoint)],
    (n, m): &(NodeId, String),
    nodes: &[NodeId],
    links: &BTreeSet<(NodeId, NodeId)>,
    class_of: &dyn Fn(NodeId) -> String,
) -> Vec<(NodeId, String)> {
    let c = class_of(*n);
    let mut out = Vec::new();
    for (a, b) in edges {
        if a.class != c || a.member != *m {
            continue;
        }
        for &n2 in nodes {
            if class_of(n2) == b.class && (n2 == *n || links.contains(&(n2, *n))) {
                out.push((n2, b.member.clone()));
            }
        }
    }
    out
}


pub fn computed_members(s: &Store, n: NodeId) -> Vec<MemberId> {
    let c = s.node_meta(n).unwrap().class;
    s.schema().class(c).members.iter().copied().filter(|m| s.schema().member(*m).is_computed()).collect()
}

pub fn assert_state_eq(a: &Store, b: &Store, worlds: &[WorldId], learned: bool) {
    for &w in worlds {
        for n in a.nodes(w).unwrap() {
            for m in computed_members(a, n) {
                if !learned && matches!(a.schema().member(m).kind, MemberKind::Output { .. }) {
                    continue;
                }
                assert_eq!(
                    a.outputs(w, n, m),
                    b.outputs(w, n, m),
                    "{w} {} {}",
                    a.node_label(n),
                    a.schema().qualified(m)
                );
            }
            if learned {
                assert_eq!(a.profile(w, n), b.profile(w, n), "profile of {} in {w}", a.node_label(n));
            }
        }
    }
}

pub fn random_value(rng: &mut impl Rng, ty: PrimType) -> Value {
    match ty {
        PrimType::Double => Value::Double(match rng.random_range(0..6) {
            0 => 0.0,
            1 => 1.0,
            2 => -2.5,
            3 => rng.random_range(-10..10) as f64 * 0.5,
            _ => rng.random_range(-100.0..100.0),
        }),
        PrimType::Long => Value::Long(rng.random_range(-3..=3)),
        PrimType::Bool => Value::Bool(rng.random_bool(0.5)),
        PrimType::String => Value::Str(["", "a", "b"].choose(rng).unwrap().to_string()),
    }
}

/// One refine call of a random run.
#[derive(Debug, Clone, Copy)]
pub struct RefineCall {
    pub tasks: u64,
    /// Brute-force dependents of the writes the call covered.
    pub dependents: usize,
    /// Computed `(node, member)` pairs in the world.
    pub computed: usize,
}

pub struct Run {
    pub store: Store,
    pub worlds: Vec<WorldId>,
    pub minimality: Vec<RefineCall>,
}

/// Random instances and writes over a random model, with refine and seal
/// calls at random points and one fork part way through.
pub fn random_run(seed: u64, epsilon: f64, refine_each_write: bool) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = super::modelgen::random_model(&mut rng);
    let schema = Schema::compile(model);
    let cfg = StoreConfig {
        default_epsilon: epsilon,
        profiler: ProfilerConfig {
            n_min: 3,
            ..ProfilerConfig::default()
        },
        ..StoreConfig::default()
    };
    let mut s = Store::new(schema, cfg).unwrap();
    let classes: Vec<String> = s.schema().classes().map(|(_, c)| c.name.clone()).collect();
    let per_class = (50 / classes.len()).min(10);
    let mut nodes: Vec<NodeId> = Vec::new();
    for c in &classes {
        for _ in 0..rng.random_range(1..=per_class) {
            nodes.push(s.create_node(WorldId(0), c).unwrap());
        }
    }
    let mut worlds = vec![WorldId(0)];
    let fork_at = rng.random_range(0..500);
    let mut links: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut clock: i64 = 0;
    let mut minimality = Vec::new();
    let mut batch: BTreeMap<WorldId, BTreeSet<(NodeId, MemberId)>> = BTreeMap::new();
    for i in 0..rng.random_range(1..=500) {
        if i == fork_at {
            let child = s.fork_world(WorldId(0)).unwrap();
            // The fork refines the parent's unrefined writes too.
            if let Some(pending) = batch.get(&WorldId(0)).cloned() {
                batch.insert(child, pending);
            }
            worlds.push(child);
        }
        let w = *worlds.choose(&mut rng).unwrap();
        clock += [0, 1, HOUR / 2, HOUR, 5 * HOUR][rng.random_range(0..5)];
        let n = *nodes.choose(&mut rng).unwrap();
        let class = s.node_meta(n).unwrap().class;
        let members: Vec<MemberId> = s.schema().class(class).members.clone();
        let m = *members.choose(&mut rng).unwrap();
        let info = s.schema().member(m).clone();
        let receipt = match info.kind {
            MemberKind::Attribute(ty) => {
                let t = s.last_timestamp(w, n, m).map_or(clock, |l| clock.max(l + 1));
                clock = t;
                Some(s.set_attribute_id(w, n, m, t, random_value(&mut rng, ty)).unwrap())
            }
            MemberKind::Relation { target, .. } | MemberKind::Dependency { target } => {
                let candidates: Vec<NodeId> =
                    nodes.iter().copied().filter(|c| s.node_meta(*c).unwrap().class == target).collect();
                let many = matches!(info.kind, MemberKind::Relation { many: true, .. });
                let current = s.get_relations(w, n, &info.name, i64::MAX).unwrap();
                let tgt = *candidates.choose(&mut rng).unwrap();
                let r = if current.contains(&tgt) {
                    s.remove_relation(w, n, &info.name, tgt, clock)
                } else if !many && !current.is_empty() {
                    s.remove_relation(w, n, &info.name, current[0], clock)
                } else {
                    links.insert((n, tgt));
                    s.add_relation(w, n, &info.name, tgt, clock)
                };
                Some(r.unwrap())
            }
            _ => None,
        };
        if let Some(r) = receipt {
            batch.entry(w).or_default().extend(brute_force_dependents(&s, w, &r, &links));
        }
        if rng.random_bool(0.03) {
            for r in s.seal(w).unwrap() {
                batch.entry(w).or_default().extend(brute_force_dependents(&s, w, &r, &links));
            }
        }
        if refine_each_write || rng.random_bool(0.1) {
            let report = refine(&mut s, w).unwrap();
            let deps = batch.remove(&w).unwrap_or_default();
            let computed = s.nodes(w).unwrap().into_iter().map(|n| computed_members(&s, n).len()).sum();
            minimality.push(RefineCall {
                tasks: report.tasks_run,
                dependents: deps.len(),
                computed,
            });
        }
    }
    for &w in &worlds {
        refine(&mut s, w).unwrap();
    }
    Run {
        store: s,
        worlds,
        minimality,
    }
}

