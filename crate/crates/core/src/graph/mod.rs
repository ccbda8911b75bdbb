// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Typed nodes with time-versioned attributes and relations, organised in
//! copy-on-write worlds.
//!
//! Every write takes the next value of a global sequence number. A fork
//! records the sequence number it was taken at and sees exactly the parent
//! state up to that number, at every data timestamp.

pub mod persist;
pub mod value;
pub mod world;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::PrimType;
use crate::poly::{ChainStats, PolyError, SegmentChain, DEFAULT_MAX_DEGREE};
use crate::profiler::{MixtureProfile, ProfilerConfig};
use crate::schema::{ClassId, MemberId, MemberKind, Schema};

pub use value::Value;
use world::{plain_at, plain_last, visible_events, OutputMap, PlainPoint, RelEvent, Referrer, Versioned, WorldData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WorldId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl fmt::Display for WorldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

pub const ROOT: WorldId = WorldId(0);

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown world {0}")]
    UnknownWorld(WorldId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {node} does not exist in world {world}")]
    NotVisible { node: NodeId, world: WorldId },
    #[error("unknown node name `{0}`")]
    UnknownName(String),
    #[error("node name `{0}` is already taken")]
    DuplicateName(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class `{class}` has no member `{member}`")]
    UnknownMember { class: String, member: String },
    #[error("`{0}` is not an attribute")]
    NotAnAttribute(String),
    #[error("`{0}` is not a relation or dependency")]
    NotARelation(String),
    #[error("`{0}` holds no values")]
    NotAValue(String),
    #[error("`{member}` expects {expected}, got {found}")]
    TypeMismatch {
        member: String,
        expected: PrimType,
        found: PrimType,
    },
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("timestamp {t} for `{member}` is not after the last written timestamp {last}")]
    OutOfOrder { member: String, t: i64, last: i64 },
    #[error("relation event at {t} for `{member}` precedes the last event at {last}")]
    RelationOrder { member: String, t: i64, last: i64 },
    #[error("`{member}` holds at most one target, {existing} is already linked")]
    Cardinality { member: String, existing: NodeId },
    #[error("{target} is already linked through `{member}`")]
    AlreadyLinked { member: String, target: NodeId },
    #[error("{target} is not linked through `{member}`")]
    NotLinked { member: String, target: NodeId },
    #[error("`{member}` links to {expected}, {target} is a {found}")]
    WrongTarget {
        member: String,
        target: NodeId,
        expected: String,
        found: String,
    },
    #[error("worlds {0} and {1} share no ancestor")]
    DisjointWorlds(WorldId, WorldId),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{file}: corrupt record at byte {offset}: {reason}")]
    Corrupt {
        file: String,
        offset: u64,
        reason: String,
    },
    #[error("{file}: unsupported format version {found} (expected {expected})")]
    Version { file: String, found: u32, expected: u32 },
    #[error("stored model does not load: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Store-wide settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Error bound for Double attributes without an explicit entry.
    pub default_epsilon: f64,
    /// Per-attribute error bounds keyed by `Class.attr`.
    pub epsilon: BTreeMap<String, f64>,
    pub max_degree: usize,
    pub profiler: ProfilerConfig,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            default_epsilon: 0.0,
            epsilon: BTreeMap::new(),
            max_degree: DEFAULT_MAX_DEGREE,
            profiler: ProfilerConfig::default(),
        }
    }
}

impl StoreConfig {
    pub fn check(&self) -> Result<()> {
        for (k, e) in std::iter::once((&"default".to_string(), &self.default_epsilon)).chain(&self.epsilon) {
            if !(e.is_finite() && *e >= 0.0) {
                return Err(GraphError::Config(format!("epsilon for {k} must be finite and >= 0")));
            }
        }
        if self.max_degree > 16 {
            return Err(GraphError::Config("max_degree must be at most 16".into()));
        }
        self.profiler.check().map_err(|e| GraphError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WriteKind {
    Attr,
    RelAdd(NodeId),
    RelRemove(NodeId),
    /// Open points of a chain were closed into segments by [`Store::seal`].
    Reshape,
}

/// Describes one raw write; queued for refinement in the written world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteReceipt {
    pub seq: u64,
    pub world: WorldId,
    pub node: NodeId,
    pub member: MemberId,
    pub t: i64,
    pub kind: WriteKind,
    /// Time span whose read-back changed because buffered points were
    /// closed into polynomial segments by this write or by a seal.
    pub reshaped: Option<(i64, i64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMeta {
    pub class: ClassId,
    pub world: WorldId,
    pub seq: u64,
    pub name: Option<String>,
}

/// Restricts a world comparison.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiffScope {
    pub nodes: Option<BTreeSet<NodeId>>,
    /// Member names, or `Class.member`.
    pub members: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffRow {
    pub node: NodeId,
    pub member: MemberId,
    pub a: Option<Value>,
    pub b: Option<Value>,
}

#[derive(Debug, Clone)]
pub struct Store {
    schema: Schema,
    config: StoreConfig,
    worlds: Vec<WorldData>,
    nodes: Vec<NodeMeta>,
    seq: u64,
    journal: Vec<WriteReceipt>,
}

/// Walks a world and its ancestors with the sequence bound that applies to each.
struct Overlays<'a> {
    store: &'a Store,
    next: Option<(WorldId, u64)>,
}

impl<'a> Iterator for Overlays<'a> {
    type Item = (WorldId, &'a WorldData, u64);

    fn next(&mut self) -> Option<Self::Item> {
        let (w, bound) = self.next?;
        let wd = &self.store.worlds[w.0 as usize];
        self.next = wd.parent.map(|p| (p, wd.fork_seq.min(bound)));
        Some((w, wd, bound))
    }
}

impl Store {
    pub fn new(schema: Schema, config: StoreConfig) -> Result<Store> {
        config.check()?;
        Ok(Store {
            schema,
            config,
            worlds: vec![WorldData::new(None, 0)],
            nodes: Vec::new(),
            seq: 0,
            journal: Vec::new(),
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn root(&self) -> WorldId {
        ROOT
    }

    /// Last sequence number handed out.
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub(crate) fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn worlds(&self) -> impl Iterator<Item = WorldId> {
        (0..self.worlds.len() as u64).map(WorldId)
    }

    pub fn parent(&self, w: WorldId) -> Result<Option<WorldId>> {
        Ok(self.world(w)?.parent)
    }

    pub(crate) fn world(&self, w: WorldId) -> Result<&WorldData> {
        self.worlds.get(w.0 as usize).ok_or(GraphError::UnknownWorld(w))
    }

    pub(crate) fn world_mut(&mut self, w: WorldId) -> Result<&mut WorldData> {
        self.worlds.get_mut(w.0 as usize).ok_or(GraphError::UnknownWorld(w))
    }

    fn overlays(&self, w: WorldId, bound: u64) -> Overlays<'_> {
        Overlays {
            store: self,
            next: Some((w, bound)),
        }
    }

    pub fn journal(&self) -> &[WriteReceipt] {
        &self.journal
    }

    /// Raw writes visible in `w`, in sequence order.
    pub fn visible_journal(&self, w: WorldId) -> Result<Vec<WriteReceipt>> {
        let bounds: BTreeMap<WorldId, u64> = self.overlays_checked(w)?.map(|(id, _, b)| (id, b)).collect();
        Ok(self
            .journal
            .iter()
            .filter(|r| bounds.get(&r.world).is_some_and(|b| r.seq <= *b))
            .copied()
            .collect())
    }

    fn overlays_checked(&self, w: WorldId) -> Result<Overlays<'_>> {
        self.world(w)?;
        Ok(self.overlays(w, u64::MAX))
    }

    // ---- nodes ----

    pub fn node_meta(&self, n: NodeId) -> Result<&NodeMeta> {
        self.nodes.get(n.0 as usize).ok_or(GraphError::UnknownNode(n))
    }

    pub fn node_class(&self, n: NodeId) -> Result<&str> {
        Ok(&self.schema.class(self.node_meta(n)?.class).name)
    }

    pub fn node_name(&self, n: NodeId) -> Option<&str> {
        self.nodes.get(n.0 as usize)?.name.as_deref()
    }

    /// The node's name, or its id when it has none.
    pub fn node_label(&self, n: NodeId) -> String {
        self.node_name(n).map(str::to_string).unwrap_or_else(|| n.to_string())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Whether `n` exists in `w` for readers bounded by `as_of`.
    pub fn is_visible(&self, w: WorldId, n: NodeId, as_of: u64) -> bool {
        let Some(meta) = self.nodes.get(n.0 as usize) else {
            return false;
        };
        self.overlays(w, as_of)
            .any(|(id, _, bound)| id == meta.world && meta.seq <= bound)
    }

    fn check_visible(&self, w: WorldId, n: NodeId) -> Result<&NodeMeta> {
        self.world(w)?;
        let meta = self.node_meta(n)?;
        if !self.is_visible(w, n, u64::MAX) {
            return Err(GraphError::NotVisible { node: n, world: w });
        }
        Ok(meta)
    }

    /// Nodes of `w`, in id order.
    pub fn nodes(&self, w: WorldId) -> Result<Vec<NodeId>> {
        self.world(w)?;
        Ok((0..self.nodes.len() as u64)
            .map(NodeId)
            .filter(|n| self.is_visible(w, *n, u64::MAX))
            .collect())
    }

    pub fn create_node(&mut self, w: WorldId, class: &str) -> Result<NodeId> {
        self.create_node_inner(w, class, None)
    }

    pub fn create_named_node(&mut self, w: WorldId, class: &str, name: &str) -> Result<NodeId> {
        if self.node_by_name(w, name)?.is_some() {
            return Err(GraphError::DuplicateName(name.to_string()));
        }
        self.create_node_inner(w, class, Some(name.to_string()))
    }

    fn create_node_inner(&mut self, w: WorldId, class: &str, name: Option<String>) -> Result<NodeId> {
        self.world(w)?;
        let class = self
            .schema
            .class_id(class)
            .ok_or_else(|| GraphError::UnknownClass(class.to_string()))?;
        let seq = self.next_seq();
        let id = NodeId(self.nodes.len() as u64);
        if let Some(n) = &name {
            self.worlds[w.0 as usize].names.insert(n.clone(), id);
        }
        self.nodes.push(NodeMeta {
            class,
            world: w,
            seq,
            name,
        });
        Ok(id)
    }

    pub fn node_by_name(&self, w: WorldId, name: &str) -> Result<Option<NodeId>> {
        for (_, wd, bound) in self.overlays_checked(w)? {
            if let Some(&n) = wd.names.get(name) {
                if self.nodes[n.0 as usize].seq <= bound {
                    return Ok(Some(n));
                }
            }
        }
        Ok(None)
    }

    /// Resolves a node name, or an id written as `n<digits>`.
    pub fn resolve_node(&self, w: WorldId, label: &str) -> Result<NodeId> {
        if let Some(n) = self.node_by_name(w, label)? {
            return Ok(n);
        }
        if let Some(id) = label.strip_prefix('n').and_then(|d| d.parse().ok()) {
            let n = NodeId(id);
            self.check_visible(w, n)?;
            return Ok(n);
        }
        Err(GraphError::UnknownName(label.to_string()))
    }

    pub fn member_of(&self, n: NodeId, name: &str) -> Result<MemberId> {
        let class = self.node_meta(n)?.class;
        self.schema
            .member_id(class, name)
            .ok_or_else(|| GraphError::UnknownMember {
                class: self.schema.class(class).name.clone(),
                member: name.to_string(),
            })
    }

    fn epsilon_for(&self, m: MemberId) -> f64 {
        *self
            .config
            .epsilon
            .get(&self.schema.qualified(m))
            .unwrap_or(&self.config.default_epsilon)
    }

    // ---- attributes ----

    pub fn set_attribute(&mut self, w: WorldId, n: NodeId, attr: &str, t: i64, v: Value) -> Result<WriteReceipt> {
        self.check_visible(w, n)?;
        let m = self.member_of(n, attr)?;
        self.set_attribute_id(w, n, m, t, v)
    }

    pub fn set_attribute_id(&mut self, w: WorldId, n: NodeId, m: MemberId, t: i64, v: Value) -> Result<WriteReceipt> {
        self.check_visible(w, n)?;
        let info = self.schema.member(m);
        let MemberKind::Attribute(ty) = info.kind else {
            return Err(GraphError::NotAnAttribute(self.schema.qualified(m)));
        };
        if info.class != self.nodes[n.0 as usize].class {
            return Err(GraphError::NotAnAttribute(self.schema.qualified(m)));
        }
        let found = v.prim_type();
        let v = v.coerce(ty).ok_or_else(|| GraphError::TypeMismatch {
            member: self.schema.qualified(m),
            expected: ty,
            found,
        })?;
        if let Value::Double(x) = v {
            if !x.is_finite() {
                return Err(GraphError::NonFinite(x));
            }
        }
        if let Some(last) = self.last_timestamp(w, n, m) {
            if t <= last {
                return Err(GraphError::OutOfOrder {
                    member: self.schema.qualified(m),
                    t,
                    last,
                });
            }
        }
        let eps = self.epsilon_for(m);
        let dmax = self.config.max_degree;
        let seq = self.next_seq();
        let wd = &mut self.worlds[w.0 as usize];
        let mut reshaped = None;
        match v {
            Value::Double(x) => {
                let frozen = wd.max_fork_seq;
                let chain = wd.chains.entry((n, m)).or_insert_with(|| SegmentChain::new(eps, dmax));
                if chain.open_seqs().first().is_some_and(|s| *s <= frozen) {
                    chain.freeze();
                }
                let before = chain.segments().len();
                chain.append_seq(t, x, seq).map_err(|e| match e {
                    PolyError::NonFinite(x) => GraphError::NonFinite(x),
                    e => unreachable!("append contract checked: {e}"),
                })?;
                // Reads from the first new segment up to this point change:
                // after a segment's end they now see its clamped value
                // instead of the last raw point.
                if let Some(a) = chain.segments().get(before) {
                    reshaped = Some((a.start, t));
                }
            }
            value => wd.plains.entry((n, m)).or_default().push(PlainPoint { t, seq, value }),
        }
        Ok(self.record(WriteReceipt {
            seq,
            world: w,
            node: n,
            member: m,
            t,
            kind: WriteKind::Attr,
            reshaped,
        }))
    }

    /// Closes the open buffers of `w`'s own Double chains into segments, so
    /// a snapshot stores them compressed. Buffers a fork can see are frozen
    /// exactly instead. Returns a receipt for every chain whose reads may
    /// have changed; refine `w` afterwards.
    pub fn seal(&mut self, w: WorldId) -> Result<Vec<WriteReceipt>> {
        self.world(w)?;
        let keys: Vec<(NodeId, MemberId)> = self.worlds[w.0 as usize]
            .chains
            .iter()
            .filter(|(_, c)| !c.encoder().is_empty())
            .map(|(k, _)| *k)
            .collect();
        let mut out = Vec::new();
        for (n, m) in keys {
            let wd = &mut self.worlds[w.0 as usize];
            let frozen = wd.max_fork_seq;
            let chain = wd.chains.get_mut(&(n, m)).expect("listed above");
            if chain.open_seqs().first().is_some_and(|s| *s <= frozen) {
                chain.freeze();
                continue;
            }
            let before = chain.segments().len();
            chain.flush();
            let Some(start) = chain.segments().get(before).map(|s| s.start) else {
                continue;
            };
            let seq = self.next_seq();
            out.push(self.record(WriteReceipt {
                seq,
                world: w,
                node: n,
                member: m,
                t: start,
                kind: WriteKind::Reshape,
                // Past the last point, reads now see the clamped segment end.
                reshaped: Some((start, i64::MAX)),
            }));
        }
        Ok(out)
    }

    fn record(&mut self, r: WriteReceipt) -> WriteReceipt {
        self.journal.push(r);
        r
    }

    /// Timestamp of the latest raw write of an attribute visible in `w`.
    pub fn last_timestamp(&self, w: WorldId, n: NodeId, m: MemberId) -> Option<i64> {
        for (_, wd, bound) in self.overlays(w, u64::MAX) {
            let last = match wd.chains.get(&(n, m)) {
                Some(c) => c.last_timestamp_bounded(bound),
                None => wd.plains.get(&(n, m)).and_then(|p| plain_last(p, bound)),
            };
            if last.is_some() {
                return last;
            }
        }
        None
    }

    /// Resolves any value member (attribute, derived or output) at `t`.
    pub fn get_attribute(&self, w: WorldId, n: NodeId, attr: &str, t: i64) -> Result<Option<Value>> {
        self.check_visible(w, n)?;
        let m = self.member_of(n, attr)?;
        self.get_value(w, n, m, t)
    }

    pub fn get_value(&self, w: WorldId, n: NodeId, m: MemberId, t: i64) -> Result<Option<Value>> {
        self.world(w)?;
        let info = self.schema.member(m);
        if info.value_type().is_none() {
            return Err(GraphError::NotAValue(self.schema.qualified(m)));
        }
        Ok(self.read_value(w, n, m, t))
    }

    /// Latest-at-or-before read without argument checks.
    pub(crate) fn read_value(&self, w: WorldId, n: NodeId, m: MemberId, t: i64) -> Option<Value> {
        match self.schema.member(m).kind {
            MemberKind::Attribute(PrimType::Double) => self
                .overlays(w, u64::MAX)
                .find_map(|(_, wd, bound)| wd.chains.get(&(n, m))?.read_bounded(t, bound))
                .map(Value::Double),
            MemberKind::Attribute(_) => self
                .overlays(w, u64::MAX)
                .find_map(|(_, wd, bound)| plain_at(wd.plains.get(&(n, m))?, t, bound))
                .map(|p| p.value.clone()),
            MemberKind::Derived { .. } | MemberKind::Output { .. } => {
                let map = self.output_map(w, n, m)?;
                map.range(..=t).next_back()?.1.clone()
            }
            _ => None,
        }
    }

    /// Segment chain of a Double attribute in `w`'s own overlay.
    pub fn chain(&self, w: WorldId, n: NodeId, m: MemberId) -> Option<&SegmentChain> {
        self.worlds.get(w.0 as usize)?.chains.get(&(n, m))
    }

    /// Closed segments across every world.
    pub fn segment_count(&self) -> usize {
        self.worlds
            .iter()
            .flat_map(|w| w.chains.values())
            .map(|c| c.segments().len())
            .sum()
    }

    /// Compression counters per `(class, attribute)`, summed over every
    /// chain of every world.
    pub fn compression_stats(&self) -> BTreeMap<(String, String), ChainStats> {
        let mut out: BTreeMap<(String, String), ChainStats> = BTreeMap::new();
        for wd in &self.worlds {
            for ((_, m), c) in &wd.chains {
                let info = self.schema.member(*m);
                let key = (self.schema.class(info.class).name.clone(), info.name.clone());
                let s = c.stats();
                let e = out.entry(key).or_default();
                e.raw_points += s.raw_points;
                e.segments += s.segments;
                e.open_points += s.open_points;
                e.stored_scalars += s.stored_scalars;
            }
        }
        out
    }

    // ---- relations ----

    pub fn add_relation(&mut self, w: WorldId, n: NodeId, rel: &str, target: NodeId, t: i64) -> Result<WriteReceipt> {
        self.check_visible(w, n)?;
        let m = self.member_of(n, rel)?;
        self.relation_event(w, n, m, target, t, true)
    }

    pub fn remove_relation(&mut self, w: WorldId, n: NodeId, rel: &str, target: NodeId, t: i64) -> Result<WriteReceipt> {
        self.check_visible(w, n)?;
        let m = self.member_of(n, rel)?;
        self.relation_event(w, n, m, target, t, false)
    }

    pub fn relation_event(&mut self, w: WorldId, n: NodeId, m: MemberId, target: NodeId, t: i64, add: bool) -> Result<WriteReceipt> {
        let meta = self.check_visible(w, n)?;
        let info = self.schema.member(m);
        let qualified = self.schema.qualified(m);
        let Some((target_class, many)) = info.link_target() else {
            return Err(GraphError::NotARelation(qualified));
        };
        if info.class != meta.class {
            return Err(GraphError::NotARelation(qualified));
        }
        let tmeta = self.check_visible(w, target)?;
        if tmeta.class != target_class {
            return Err(GraphError::WrongTarget {
                member: qualified,
                target,
                expected: self.schema.class(target_class).name.clone(),
                found: self.schema.class(tmeta.class).name.clone(),
            });
        }
        let events = self.events(w, n, m, u64::MAX);
        if let Some(last) = events.last() {
            if t < last.t {
                return Err(GraphError::RelationOrder {
                    member: qualified,
                    t,
                    last: last.t,
                });
            }
        }
        let current = replay(events.iter(), i64::MAX);
        if add {
            if current.contains(&target) {
                return Err(GraphError::AlreadyLinked { member: qualified, target });
            }
            if let (false, Some(existing)) = (many, current.first()) {
                return Err(GraphError::Cardinality {
                    member: qualified,
                    existing: *existing,
                });
            }
        } else if !current.contains(&target) {
            return Err(GraphError::NotLinked { member: qualified, target });
        }
        let seq = self.next_seq();
        let wd = &mut self.worlds[w.0 as usize];
        wd.rels.entry((n, m)).or_default().push(RelEvent { t, seq, target, add });
        let refs = wd.referrers.entry(target).or_default();
        if !refs.iter().any(|r| r.node == n && r.rel == m) {
            refs.push(Referrer { node: n, rel: m, seq });
        }
        Ok(self.record(WriteReceipt {
            seq,
            world: w,
            node: n,
            member: m,
            t,
            kind: if add {
                WriteKind::RelAdd(target)
            } else {
                WriteKind::RelRemove(target)
            },
            reshaped: None,
        }))
    }

    /// Visible link events of `(n, m)` in `w`, oldest first.
    fn events(&self, w: WorldId, n: NodeId, m: MemberId, as_of: u64) -> Vec<RelEvent> {
        let mut layers: Vec<&[RelEvent]> = self
            .overlays(w, as_of)
            .filter_map(|(_, wd, bound)| Some(visible_events(wd.rels.get(&(n, m))?, bound)))
            .collect();
        layers.reverse();
        layers.concat()
    }

    pub fn get_relations(&self, w: WorldId, n: NodeId, rel: &str, t: i64) -> Result<Vec<NodeId>> {
        self.check_visible(w, n)?;
        let m = self.member_of(n, rel)?;
        if self.schema.member(m).link_target().is_none() {
            return Err(GraphError::NotARelation(self.schema.qualified(m)));
        }
        Ok(self.links(w, n, m, t, u64::MAX))
    }

    /// Targets of `(n, m)` at `t`, counting only events with `seq <= as_of`.
    /// Sorted by node id.
    pub(crate) fn links(&self, w: WorldId, n: NodeId, m: MemberId, t: i64, as_of: u64) -> Vec<NodeId> {
        replay(self.events(w, n, m, as_of).iter(), t)
    }

    pub(crate) fn is_linked(&self, w: WorldId, n: NodeId, m: MemberId, target: NodeId, t: i64, as_of: u64) -> bool {
        let mut present = false;
        for e in self.events(w, n, m, as_of) {
            if e.t > t {
                break;
            }
            if e.target == target {
                present = e.add;
            }
        }
        present
    }

    /// Every `(node, rel)` that has ever linked to `target` in `w`.
    pub fn referrers(&self, w: WorldId, target: NodeId) -> Vec<(NodeId, MemberId)> {
        let mut out: Vec<(NodeId, MemberId)> = self
            .overlays(w, u64::MAX)
            .flat_map(|(_, wd, bound)| {
                wd.referrers
                    .get(&target)
                    .into_iter()
                    .flatten()
                    .filter(move |r| r.seq <= bound)
                    .map(|r| (r.node, r.rel))
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    // ---- worlds ----

    /// Forks `parent`. Constant time: nothing is copied.
    pub fn fork_world(&mut self, parent: WorldId) -> Result<WorldId> {
        let seq = self.seq;
        let p = self.world_mut(parent)?;
        p.max_fork_seq = seq;
        let refined = p.refined_upto;
        let mut child = WorldData::new(Some(parent), seq);
        // Unrefined parent writes are refined in the child too.
        child.refined_upto = refined;
        self.worlds.push(child);
        Ok(WorldId(self.worlds.len() as u64 - 1))
    }

    fn ancestors(&self, w: WorldId) -> Vec<WorldId> {
        self.overlays(w, u64::MAX).map(|(id, _, _)| id).collect()
    }

    /// Scalar members whose values at `t` differ between `a` and `b`, for
    /// nodes existing in either world.
    pub fn diff_worlds(&self, a: WorldId, b: WorldId, scope: &DiffScope, t: i64) -> Result<Vec<DiffRow>> {
        self.world(a)?;
        self.world(b)?;
        let anc = self.ancestors(a);
        if !self.ancestors(b).iter().any(|x| anc.contains(x)) {
            return Err(GraphError::DisjointWorlds(a, b));
        }
        let mut rows = Vec::new();
        for i in 0..self.nodes.len() as u64 {
            let n = NodeId(i);
            if scope.nodes.as_ref().is_some_and(|s| !s.contains(&n)) {
                continue;
            }
            let (va, vb) = (self.is_visible(a, n, u64::MAX), self.is_visible(b, n, u64::MAX));
            if !va && !vb {
                continue;
            }
            let class = self.nodes[i as usize].class;
            for &m in &self.schema.class(class).members {
                let info = self.schema.member(m);
                if info.value_type().is_none() {
                    continue;
                }
                if let Some(names) = &scope.members {
                    if !names.contains(&info.name) && !names.contains(&self.schema.qualified(m)) {
                        continue;
                    }
                }
                let x = if va { self.read_value(a, n, m, t) } else { None };
                let y = if vb { self.read_value(b, n, m, t) } else { None };
                if x != y {
                    rows.push(DiffRow { node: n, member: m, a: x, b: y });
                }
            }
        }
        Ok(rows)
    }

    // ---- computed values ----

    /// Computed values of `(n, m)` as seen from `w`.
    pub fn output_map(&self, w: WorldId, n: NodeId, m: MemberId) -> Option<&OutputMap> {
        let mut cur = w;
        let mut bound = u64::MAX;
        loop {
            let wd = &self.worlds[cur.0 as usize];
            if let Some(map) = wd.outputs.get(&(n, m)).and_then(|v| v.get(bound)) {
                return Some(map);
            }
            if !*wd.inherit.get(bound)? {
                return None;
            }
            cur = wd.parent?;
            bound = bound.min(wd.fork_seq);
        }
    }

    /// All computed entries of `(n, m)` in `w`, failures as `None`.
    pub fn outputs(&self, w: WorldId, n: NodeId, m: MemberId) -> Vec<(i64, Option<Value>)> {
        self.output_map(w, n, m)
            .map(|map| map.iter().map(|(t, v)| (*t, v.clone())).collect())
            .unwrap_or_default()
    }

    pub(crate) fn output_map_mut(&mut self, w: WorldId, n: NodeId, m: MemberId, stamp: u64) -> &mut OutputMap {
        if !self.worlds[w.0 as usize].outputs.contains_key(&(n, m)) {
            let init = self.output_map(w, n, m).cloned().unwrap_or_default();
            self.worlds[w.0 as usize].outputs.insert((n, m), Versioned::new(stamp, init));
        }
        let wd = &mut self.worlds[w.0 as usize];
        let frozen = wd.max_fork_seq;
        wd.outputs.get_mut(&(n, m)).expect("inserted").edit(stamp, frozen)
    }

    pub fn profile(&self, w: WorldId, n: NodeId) -> Option<&MixtureProfile> {
        let mut cur = w;
        let mut bound = u64::MAX;
        loop {
            let wd = &self.worlds[cur.0 as usize];
            if let Some(p) = wd.profiles.get(&n).and_then(|v| v.get(bound)) {
                return p.as_ref();
            }
            if !*wd.inherit.get(bound)? {
                return None;
            }
            cur = wd.parent?;
            bound = bound.min(wd.fork_seq);
        }
    }

    pub(crate) fn profile_mut(&mut self, w: WorldId, n: NodeId, slots: u32, stamp: u64) -> &mut MixtureProfile {
        if !self.worlds[w.0 as usize].profiles.contains_key(&n) {
            let init = self.profile(w, n).cloned();
            self.worlds[w.0 as usize].profiles.insert(n, Versioned::new(stamp, init));
        }
        let wd = &mut self.worlds[w.0 as usize];
        let frozen = wd.max_fork_seq;
        wd.profiles
            .get_mut(&n)
            .expect("inserted")
            .edit(stamp, frozen)
            .get_or_insert_with(|| MixtureProfile::new(slots as usize))
    }

    /// Drops every computed value and profile of `w`, including inherited ones.
    pub(crate) fn reset_computed(&mut self, w: WorldId, stamp: u64) {
        let wd = &mut self.worlds[w.0 as usize];
        let frozen = wd.max_fork_seq;
        *wd.inherit.edit(stamp, frozen) = false;
        for v in wd.outputs.values_mut() {
            v.edit(stamp, frozen).clear();
        }
        for v in wd.profiles.values_mut() {
            *v.edit(stamp, frozen) = None;
        }
        wd.refined_upto = stamp;
    }

    pub(crate) fn take_pending(&mut self, w: WorldId) -> Result<Vec<WriteReceipt>> {
        let out = self.pending(w)?;
        let seq = self.seq;
        self.world_mut(w)?.refined_upto = seq;
        Ok(out)
    }

    /// Raw writes visible in `w` that no refinement of `w` has processed yet.
    pub fn pending(&self, w: WorldId) -> Result<Vec<WriteReceipt>> {
        let from = self.world(w)?.refined_upto;
        let bounds: BTreeMap<WorldId, u64> = self.overlays(w, u64::MAX).map(|(id, _, b)| (id, b)).collect();
        let start = self.journal.partition_point(|r| r.seq <= from);
        Ok(self.journal[start..]
            .iter()
            .filter(|r| bounds.get(&r.world).is_some_and(|b| r.seq <= *b))
            .copied()
            .collect())
    }
}

fn replay<'a>(events: impl Iterator<Item = &'a RelEvent>, t: i64) -> Vec<NodeId> {
    let mut set = BTreeSet::new();
    for e in events {
        if e.t > t {
            break;
        }
        if e.add {
            set.insert(e.target);
        } else {
            set.remove(&e.target);
        }
    }
    set.into_iter().collect()
}
