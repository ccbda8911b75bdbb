// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Hypothetical actions applied to a fork of a world.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::parse_expr;
use crate::graph::{DiffRow, DiffScope, GraphError, NodeId, Store, Value, WorldId};
use crate::refine::{eval::eval, refine, RefinementReport};

#[derive(Debug, Error)]
pub enum WhatIfError {
    #[error("unknown world {0:?}")]
    World(String),
    #[error("{0} has {1} unrefined writes; refine it before forking scenarios")]
    Unrefined(WorldId, usize),
    #[error("action {index}: {error}")]
    Action { index: usize, error: GraphError },
    #[error("action {index}: {reason}")]
    Value { index: usize, reason: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("metric: {0}")]
    Metric(String),
}

/// One hypothetical change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Action {
    #[serde(alias = "setAttribute")]
    Set {
        node: String,
        attr: String,
        t: i64,
        value: serde_json::Value,
    },
    Disconnect {
        node: String,
        rel: String,
        target: String,
        t: i64,
    },
    Connect {
        node: String,
        rel: String,
        target: String,
        t: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// `root`, or a world label such as `w3`.
    #[serde(default = "root_label")]
    pub base: String,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(rename = "queryT")]
    pub query_t: i64,
    /// Expression ranking scenarios, evaluated on `reportNode`.
    #[serde(default)]
    pub metric: Option<String>,
    /// Reporting node for `metric`. Defaults to the first node, by id,
    /// whose class resolves every name the metric uses.
    #[serde(default)]
    pub report_node: Option<String>,
    /// Limits the divergence report.
    #[serde(default)]
    pub scope: ScopeSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeSpec {
    /// Node names or ids.
    #[serde(default)]
    pub nodes: Option<Vec<String>>,
    /// Member names, or `Class.member`.
    #[serde(default)]
    pub members: Option<Vec<String>>,
}

fn root_label() -> String {
    "root".to_string()
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The divergence scope, with node labels resolved in the base world.
    pub fn diff_scope(&self, store: &Store) -> Result<DiffScope, WhatIfError> {
        let base = resolve_world(store, &self.base)?;
        let nodes = match &self.scope.nodes {
            Some(labels) => Some(
                labels
                    .iter()
                    .map(|l| store.resolve_node(base, l))
                    .collect::<Result<_, _>>()?,
            ),
            None => None,
        };
        Ok(DiffScope {
            nodes,
            members: self.scope.members.as_ref().map(|m| m.iter().cloned().collect()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub name: String,
    pub base: WorldId,
    pub world: WorldId,
    pub query_t: i64,
    pub report: RefinementReport,
    pub divergence: Vec<DiffRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    /// Position in the input.
    pub index: usize,
    pub name: String,
    pub world: WorldId,
    pub value: f64,
}

pub fn resolve_world(store: &Store, label: &str) -> Result<WorldId, WhatIfError> {
    let w = match label {
        "root" => Some(store.root()),
        l => l.strip_prefix('w').and_then(|d| d.parse().ok()).map(WorldId),
    };
    match w {
        Some(w) if store.parent(w).is_ok() => Ok(w),
        _ => Err(WhatIfError::World(label.to_string())),
    }
}

fn json_value(v: &serde_json::Value, store: &Store, n: NodeId, attr: &str) -> Result<Value, String> {
    let m = store.member_of(n, attr).map_err(|e| e.to_string())?;
    let ty = store
        .schema()
        .member(m)
        .value_type()
        .ok_or_else(|| format!("{attr} does not hold values"))?;
    let text = match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(x) => x.to_string(),
        serde_json::Value::Bool(b) => b.to_string(),
        other => return Err(format!("unsupported value {other}")),
    };
    Value::parse(&text, ty).ok_or_else(|| format!("{text:?} is not a {ty}"))
}

fn apply(store: &mut Store, w: WorldId, index: usize, a: &Action) -> Result<(), WhatIfError> {
    let graph = |error| WhatIfError::Action { index, error };
    match a {
        Action::Set { node, attr, t, value } => {
            let n = store.resolve_node(w, node).map_err(graph)?;
            let v = json_value(value, store, n, attr).map_err(|reason| WhatIfError::Value { index, reason })?;
            store.set_attribute(w, n, attr, *t, v).map_err(graph)?;
        }
        Action::Disconnect { node, rel, target, t } | Action::Connect { node, rel, target, t } => {
            let n = store.resolve_node(w, node).map_err(graph)?;
            let target = store.resolve_node(w, target).map_err(graph)?;
            if matches!(a, Action::Connect { .. }) {
                store.add_relation(w, n, rel, target, *t).map_err(graph)?;
            } else {
                store.remove_relation(w, n, rel, target, *t).map_err(graph)?;
            }
        }
    }
    Ok(())
}

/// Forks the base world, applies the actions in order, refines the fork and
/// reports how it differs from the base at `query_t`. The base is not
/// modified; a failed action leaves an abandoned fork behind.
pub fn run_scenario(store: &mut Store, s: &Scenario, scope: &DiffScope) -> Result<ScenarioResult, WhatIfError> {
    let base = resolve_world(store, &s.base)?;
    let pending = store.pending(base)?.len();
    if pending > 0 {
        return Err(WhatIfError::Unrefined(base, pending));
    }
    let world = store.fork_world(base)?;
    for (i, a) in s.actions.iter().enumerate() {
        apply(store, world, i, a)?;
    }
    let report = refine(store, world)?;
    let divergence = store.diff_worlds(base, world, scope, s.query_t)?;
    Ok(ScenarioResult {
        name: s.name.clone(),
        base,
        world,
        query_t: s.query_t,
        report,
        divergence,
    })
}

/// Evaluates `metric` on a reporting node in `w` at `t`.
pub fn evaluate_metric(
    store: &Store,
    w: WorldId,
    metric: &str,
    node: Option<&str>,
    t: i64,
) -> Result<f64, WhatIfError> {
    let expr = parse_expr(metric).map_err(|d| WhatIfError::Metric(d.to_string()))?;
    let mk = |e: String| WhatIfError::Metric(e);
    let (n, compiled) = match node {
        Some(label) => {
            let n = store.resolve_node(w, label)?;
            let class = store.node_meta(n)?.class;
            (n, store.schema().resolve_expr(class, &expr).map_err(mk)?)
        }
        None => store
            .nodes(w)?
            .into_iter()
            .find_map(|n| {
                let class = store.node_meta(n).ok()?.class;
                store.schema().resolve_expr(class, &expr).ok().map(|c| (n, c))
            })
            .ok_or_else(|| mk(format!("no node in {w} can evaluate {metric}")))?,
    };
    let v = eval(store, w, n, &compiled, t).map_err(mk)?;
    v.as_f64().ok_or_else(|| mk(format!("{metric} is not numeric ({v})")))
}

/// Ranks scenario results by `metric`, ascending. Ties keep input order.
pub fn compare_scenarios(
    store: &Store,
    results: &[ScenarioResult],
    metric: &str,
    node: Option<&str>,
) -> Result<Vec<Ranked>, WhatIfError> {
    if let Some(first) = results.first() {
        if let Some(other) = results.iter().find(|r| r.base != first.base) {
            return Err(WhatIfError::Metric(format!(
                "scenario {} forks {} but {} forks {}",
                other.name, other.base, first.name, first.base
            )));
        }
    }
    let mut ranked = results
        .iter()
        .enumerate()
        .map(|(index, r)| {
            Ok(Ranked {
                index,
                name: r.name.clone(),
                world: r.world,
                value: evaluate_metric(store, r.world, metric, node, r.query_t)?,
            })
        })
        .collect::<Result<Vec<_>, WhatIfError>>()?;
    ranked.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(ranked)
}
