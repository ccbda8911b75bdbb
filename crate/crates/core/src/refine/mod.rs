// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Incremental recomputation of derived and learned members.
//!
//! A derived member holds a value at every time one of its inputs was
//! written (a trigger). Whether a remote write triggers a node is decided by
//! the links that existed when the write happened, so the set of trigger
//! times does not depend on when `refine` runs. Existing values are
//! re-evaluated whenever an input they read may have changed.

pub mod depgraph;
pub mod eval;

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::graph::{GraphError, NodeId, Store, Value, WorldId, WriteKind, WriteReceipt};
use crate::profiler::{slot_of, Score};
use crate::schema::{MemberId, MemberKind, Reader};

pub use depgraph::{build_dependency_graph, CycleError, DependencyGraph};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RefinementReport {
    pub tasks_run: u64,
    pub values_written: u64,
    pub failures: Vec<Failure>,
}

impl RefinementReport {
    pub fn absorb(&mut self, other: RefinementReport) {
        self.tasks_run += other.tasks_run;
        self.values_written += other.values_written;
        self.failures.extend(other.failures);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub node: String,
    pub member: String,
    pub t: i64,
    pub reason: String,
}

/// An instance-level member that a write may affect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct DirtyEntry {
    pub world: WorldId,
    pub node: NodeId,
    pub member: MemberId,
    pub t: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Cause {
    Always,
    /// Only entries at times where `source` is linked through `rel`.
    Via { rel: MemberId, source: NodeId },
}

#[derive(Debug, Default)]
struct Work {
    /// Trigger time to the smallest originating write sequence number.
    triggers: BTreeMap<i64, u64>,
    /// Inclusive time ranges whose existing entries must be re-evaluated.
    ranges: BTreeMap<Cause, Vec<(i64, i64)>>,
    /// Learned samples: `(seq, t, observed node)`.
    samples: Vec<(u64, i64, NodeId)>,
}

#[derive(Default)]
struct Queue {
    items: BTreeMap<(u32, NodeId, MemberId), Work>,
}

impl Queue {
    fn work(&mut self, store: &Store, n: NodeId, m: MemberId) -> &mut Work {
        self.items.entry((store.schema().rank(m), n, m)).or_default()
    }

    fn trigger(&mut self, store: &Store, n: NodeId, m: MemberId, t: i64, origin: u64) {
        let e = self.work(store, n, m).triggers.entry(t).or_insert(origin);
        *e = (*e).min(origin);
    }

    fn range(&mut self, store: &Store, n: NodeId, m: MemberId, from: i64, to: i64, cause: Cause) {
        self.work(store, n, m).ranges.entry(cause).or_default().push((from, to));
    }
}

/// Instance-level dependents of a write, following links in either
/// direction regardless of when they existed.
pub fn on_write(store: &Store, w: WorldId, r: &WriteReceipt) -> Vec<DirtyEntry> {
    let schema = store.schema();
    let mut seen: BTreeSet<(NodeId, MemberId)> = BTreeSet::new();
    let mut frontier: Vec<(NodeId, MemberId)> = Vec::new();
    match r.kind {
        WriteKind::Attr | WriteKind::Reshape => frontier.extend(direct_readers(store, w, r.node, r.member)),
        WriteKind::RelAdd(_) | WriteKind::RelRemove(_) => {
            frontier.extend(schema.link_readers(r.member).iter().map(|d| (r.node, *d)))
        }
    }
    while let Some(key) = frontier.pop() {
        if seen.insert(key) {
            frontier.extend(direct_readers(store, w, key.0, key.1));
        }
    }
    seen.into_iter()
        .map(|(node, member)| DirtyEntry {
            world: w,
            node,
            member,
            t: r.t,
        })
        .collect()
}

fn direct_readers(store: &Store, w: WorldId, n: NodeId, m: MemberId) -> Vec<(NodeId, MemberId)> {
    let mut out = Vec::new();
    for reader in store.schema().readers(m) {
        match *reader {
            Reader::Local(d) => out.push((n, d)),
            Reader::Remote { member, via } | Reader::Learned { output: member, via } => {
                for (m2, rel) in store.referrers(w, n) {
                    if rel == via {
                        out.push((m2, member));
                    }
                }
            }
        }
    }
    out
}

/// Processes the writes queued for `w` since its last refinement.
pub fn refine(store: &mut Store, w: WorldId) -> Result<RefinementReport, GraphError> {
    let pending = store.take_pending(w)?;
    let mut report = RefinementReport::default();
    if pending.is_empty() {
        return Ok(report);
    }
    let stamp = store.next_seq();
    // The stamp is no write; leaving it above the watermark would make the
    // next empty refine move the watermark.
    store.world_mut(w)?.refined_upto = stamp;
    let mut q = Queue::default();
    for r in &pending {
        seed(store, w, r, &mut q);
    }
    process(store, w, stamp, q, &mut report);
    Ok(report)
}

/// Discards every computed value and profile of `w` and rebuilds them by
/// replaying each visible raw write in sequence order.
pub fn full_recompute(store: &mut Store, w: WorldId) -> Result<RefinementReport, GraphError> {
    let journal = store.visible_journal(w)?;
    let stamp = store.next_seq();
    store.reset_computed(w, stamp);
    let mut report = RefinementReport::default();
    for r in &journal {
        let mut q = Queue::default();
        seed(store, w, r, &mut q);
        process(store, w, stamp, q, &mut report);
    }
    Ok(report)
}

fn seed(store: &Store, w: WorldId, r: &WriteReceipt, q: &mut Queue) {
    let schema = store.schema();
    let (n, t, s) = (r.node, r.t, r.seq);
    match r.kind {
        WriteKind::Attr => {
            for reader in schema.readers(r.member) {
                match *reader {
                    Reader::Local(d) => {
                        q.trigger(store, n, d, t, s);
                        q.range(store, n, d, t, i64::MAX, Cause::Always);
                        if let Some((a, b)) = r.reshaped {
                            q.range(store, n, d, a, b, Cause::Always);
                        }
                    }
                    Reader::Remote { member, via } => {
                        for (m2, rel) in store.referrers(w, n) {
                            if rel != via {
                                continue;
                            }
                            if store.is_linked(w, m2, via, n, t, s) {
                                q.trigger(store, m2, member, t, s);
                            }
                            let cause = Cause::Via { rel: via, source: n };
                            q.range(store, m2, member, t, i64::MAX, cause);
                            if let Some((a, b)) = r.reshaped {
                                q.range(store, m2, member, a, b, cause);
                            }
                        }
                    }
                    Reader::Learned { output, via } => {
                        for (m2, rel) in store.referrers(w, n) {
                            if rel == via && store.is_linked(w, m2, via, n, t, s) {
                                q.work(store, m2, output).samples.push((s, t, n));
                            }
                        }
                    }
                }
            }
        }
        WriteKind::RelAdd(_) | WriteKind::RelRemove(_) => {
            for &d in schema.link_readers(r.member) {
                q.trigger(store, n, d, t, s);
                q.range(store, n, d, t, i64::MAX, Cause::Always);
            }
        }
        // Only existing entries are re-read; learned samples were already
        // taken from the points themselves.
        WriteKind::Reshape => {
            let Some((a, b)) = r.reshaped else {
                return;
            };
            for reader in schema.readers(r.member) {
                match *reader {
                    Reader::Local(d) => q.range(store, n, d, a, b, Cause::Always),
                    Reader::Remote { member, via } => {
                        for (m2, rel) in store.referrers(w, n) {
                            if rel == via {
                                q.range(store, m2, member, a, b, Cause::Via { rel: via, source: n });
                            }
                        }
                    }
                    Reader::Learned { .. } => {}
                }
            }
        }
    }
}

fn process(store: &mut Store, w: WorldId, stamp: u64, mut q: Queue, report: &mut RefinementReport) {
    let mut last_rank = 0;
    while let Some(((rank, n, m), work)) = q.items.pop_first() {
        debug_assert!(rank >= last_rank, "work queued behind its dependents");
        last_rank = rank;
        match store.schema().member(m).kind {
            MemberKind::Derived { .. } => process_derived(store, w, stamp, n, m, work, &mut q, report),
            MemberKind::Output { .. } => process_learned(store, w, stamp, n, m, work, &mut q, report),
            _ => unreachable!("only computed members are queued"),
        }
    }
}

fn merged(mut ranges: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    ranges.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::new();
    for (a, b) in ranges {
        match out.last_mut() {
            Some(last) if a <= last.1.saturating_add(1) => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn process_derived(
    store: &mut Store,
    w: WorldId,
    stamp: u64,
    n: NodeId,
    d: MemberId,
    work: Work,
    q: &mut Queue,
    report: &mut RefinementReport,
) {
    let MemberKind::Derived { ty, expr } = store.schema().member(d).kind.clone() else {
        unreachable!()
    };
    // Trigger times carry their origin; re-evaluated entries do not.
    let mut times: BTreeMap<i64, Option<u64>> = work.triggers.iter().map(|(t, s)| (*t, Some(*s))).collect();
    if let Some(map) = store.output_map(w, n, d) {
        for (cause, ranges) in &work.ranges {
            for (a, b) in merged(ranges.clone()) {
                for (&t, _) in map.range(a..=b) {
                    if times.contains_key(&t) {
                        continue;
                    }
                    let hit = match *cause {
                        Cause::Always => true,
                        Cause::Via { rel, source } => store.is_linked(w, n, rel, source, t, u64::MAX),
                    };
                    if hit {
                        times.insert(t, None);
                    }
                }
            }
        }
    }
    if times.is_empty() {
        return;
    }
    report.tasks_run += 1;
    for (t, origin) in times {
        let value = match eval::eval(store, w, n, &expr, t) {
            Ok(v) => match v.coerce(ty) {
                Some(v) => Some(v),
                None => {
                    fail(store, report, n, d, t, format!("formula result does not fit {ty}"));
                    None
                }
            },
            Err(reason) => {
                fail(store, report, n, d, t, reason);
                None
            }
        };
        write(store, w, stamp, n, d, t, value, origin, q, report);
    }
}

#[allow(clippy::too_many_arguments)]
fn process_learned(
    store: &mut Store,
    w: WorldId,
    stamp: u64,
    n: NodeId,
    out: MemberId,
    mut work: Work,
    q: &mut Queue,
    report: &mut RefinementReport,
) {
    if work.samples.is_empty() {
        return;
    }
    let class = store.schema().member(out).class;
    let spec = store
        .schema()
        .class(class)
        .learned
        .clone()
        .expect("outputs belong to learned classes");
    let cfg = store.config().profiler;
    report.tasks_run += 1;
    work.samples.sort_unstable();
    for (seq, t, src) in work.samples {
        let Some(v) = store.read_value(w, src, spec.value, t).and_then(|v| v.as_f64()) else {
            fail(store, report, n, out, t, "observed value is missing".to_string());
            continue;
        };
        let slot = slot_of(t, spec.context, spec.slots, &cfg);
        let profile = store.profile_mut(w, n, spec.slots, stamp);
        let score = profile.probability(slot, v, &cfg).expect("finite value, valid slot");
        profile.update(slot, v, &cfg).expect("finite value, valid slot");
        if let Score::Probability(p) = score {
            write(store, w, stamp, n, out, t, Some(Value::Double(p)), Some(seq), q, report);
        }
    }
}

fn fail(store: &Store, report: &mut RefinementReport, n: NodeId, m: MemberId, t: i64, reason: String) {
    report.failures.push(Failure {
        node: store.node_label(n),
        member: store.schema().qualified(m),
        t,
        reason,
    });
}

/// Stores a computed value and queues the members reading it.
#[allow(clippy::too_many_arguments)]
fn write(
    store: &mut Store,
    w: WorldId,
    stamp: u64,
    n: NodeId,
    m: MemberId,
    t: i64,
    value: Option<Value>,
    origin: Option<u64>,
    q: &mut Queue,
    report: &mut RefinementReport,
) {
    let existing = store.output_map(w, n, m).and_then(|map| map.get(&t).cloned());
    if existing.as_ref() == Some(&value) {
        return;
    }
    let is_new = existing.is_none();
    if value.is_some() {
        report.values_written += 1;
    }
    let map = store.output_map_mut(w, n, m, stamp);
    map.insert(t, value);
    let to = map
        .range(t + 1..)
        .next()
        .map(|(next, _)| next - 1)
        .unwrap_or(i64::MAX);
    let origin = origin.filter(|_| is_new);
    for reader in store.schema().readers(m).to_vec() {
        match reader {
            Reader::Local(d) => {
                if let Some(s) = origin {
                    q.trigger(store, n, d, t, s);
                }
                q.range(store, n, d, t, to, Cause::Always);
            }
            Reader::Remote { member, via } => {
                for (m2, rel) in store.referrers(w, n) {
                    if rel != via {
                        continue;
                    }
                    if let Some(s) = origin {
                        if store.is_linked(w, m2, via, n, t, s) {
                            q.trigger(store, m2, member, t, s);
                        }
                    }
                    q.range(store, m2, member, t, to, Cause::Via { rel: via, source: n });
                }
            }
            Reader::Learned { .. } => {}
        }
    }
}
