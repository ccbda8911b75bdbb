// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::HashMap;

use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::dsl::validate::{dependency_edges, Endpoint};
use crate::dsl::MetaModel;

/// Class-level dependency graph between members.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DependencyGraph {
    /// `(source, dependent)` pairs in declaration order.
    pub edges: Vec<(Endpoint, Endpoint)>,
    /// Every endpoint of `edges`, sources before dependents.
    pub order: Vec<Endpoint>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("dependency cycle through {0}")]
pub struct CycleError(pub Endpoint);

pub fn build_dependency_graph(m: &MetaModel) -> Result<DependencyGraph, CycleError> {
    let edges = dependency_edges(m);
    let mut g: DiGraph<Endpoint, ()> = DiGraph::new();
    let mut ids: HashMap<Endpoint, NodeIndex> = HashMap::new();
    for (a, b) in &edges {
        let ia = *ids.entry(a.clone()).or_insert_with(|| g.add_node(a.clone()));
        let ib = *ids.entry(b.clone()).or_insert_with(|| g.add_node(b.clone()));
        g.add_edge(ia, ib, ());
    }
    let order = toposort(&g, None).map_err(|c| CycleError(g[c.node_id()].clone()))?;
    Ok(DependencyGraph {
        order: order.into_iter().map(|i| g[i].clone()).collect(),
        edges,
    })
}
