// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use super::value::Value;
use super::{NodeId, WorldId};
use crate::poly::SegmentChain;
use crate::profiler::MixtureProfile;
use crate::schema::MemberId;

/// A value that keeps its past states for readers bounded by an older
/// sequence number. A new version is cut only when a fork could observe the
/// current one.
#[derive(Debug, Clone, PartialEq)]
pub struct Versioned<T> {
    versions: Vec<(u64, T)>,
}

impl<T: Clone> Versioned<T> {
    pub fn new(seq: u64, value: T) -> Self {
        Versioned {
            versions: vec![(seq, value)],
        }
    }

    pub fn from_versions(versions: Vec<(u64, T)>) -> Self {
        assert!(!versions.is_empty(), "at least one version");
        Versioned { versions }
    }

    pub fn versions(&self) -> &[(u64, T)] {
        &self.versions
    }

    /// State visible to a reader bounded by `bound`.
    pub fn get(&self, bound: u64) -> Option<&T> {
        let i = self.versions.partition_point(|(s, _)| *s <= bound);
        (i > 0).then(|| &self.versions[i - 1].1)
    }

    pub fn latest(&self) -> &T {
        &self.versions.last().expect("non-empty").1
    }

    /// Mutable access to the latest state, copying it first if a fork
    /// taken at `frozen_upto` or earlier may read it.
    pub fn edit(&mut self, seq: u64, frozen_upto: u64) -> &mut T {
        let last = self.versions.last().expect("non-empty");
        if last.0 <= frozen_upto {
            let copy = last.1.clone();
            self.versions.push((seq, copy));
        }
        &mut self.versions.last_mut().expect("non-empty").1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlainPoint {
    pub t: i64,
    pub seq: u64,
    pub value: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelEvent {
    pub t: i64,
    pub seq: u64,
    pub target: NodeId,
    pub add: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Referrer {
    pub node: NodeId,
    pub rel: MemberId,
    /// Sequence number of the first link event.
    pub seq: u64,
}

/// Computed values of one member on one node; `None` marks a failed
/// evaluation.
pub type OutputMap = BTreeMap<i64, Option<Value>>;

/// One world's overlay on top of its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldData {
    pub parent: Option<WorldId>,
    pub fork_seq: u64,
    /// Latest sequence number any child was forked at.
    pub max_fork_seq: u64,
    pub chains: BTreeMap<(NodeId, MemberId), SegmentChain>,
    pub plains: BTreeMap<(NodeId, MemberId), Vec<PlainPoint>>,
    pub rels: BTreeMap<(NodeId, MemberId), Vec<RelEvent>>,
    pub referrers: BTreeMap<NodeId, Vec<Referrer>>,
    pub outputs: BTreeMap<(NodeId, MemberId), Versioned<OutputMap>>,
    pub profiles: BTreeMap<NodeId, Versioned<Option<MixtureProfile>>>,
    /// Whether computed values fall through to the parent.
    pub inherit: Versioned<bool>,
    pub names: BTreeMap<String, NodeId>,
    /// Writes with a higher sequence number are still waiting for refinement.
    pub refined_upto: u64,
}

impl WorldData {
    pub fn new(parent: Option<WorldId>, fork_seq: u64) -> Self {
        WorldData {
            parent,
            fork_seq,
            max_fork_seq: 0,
            chains: BTreeMap::new(),
            plains: BTreeMap::new(),
            rels: BTreeMap::new(),
            referrers: BTreeMap::new(),
            outputs: BTreeMap::new(),
            profiles: BTreeMap::new(),
            inherit: Versioned::new(0, parent.is_some()),
            names: BTreeMap::new(),
            refined_upto: 0,
        }
    }
}

/// Latest plain point at or before `t` among points with `seq <= bound`.
pub fn plain_at(points: &[PlainPoint], t: i64, bound: u64) -> Option<&PlainPoint> {
    let visible = &points[..points.partition_point(|p| p.seq <= bound)];
    let i = visible.partition_point(|p| p.t <= t);
    (i > 0).then(|| &visible[i - 1])
}

pub fn plain_last(points: &[PlainPoint], bound: u64) -> Option<i64> {
    let n = points.partition_point(|p| p.seq <= bound);
    (n > 0).then(|| points[n - 1].t)
}

pub fn visible_events(events: &[RelEvent], bound: u64) -> &[RelEvent] {
    &events[..events.partition_point(|e| e.seq <= bound)]
}
