// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use serde::Serialize;

use crate::graph::{GraphError, Store, WorldId};
use crate::profiler::Verdict;

/// A learned probability below the threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Alert {
    pub t: i64,
    pub node: String,
    /// The observed value the probability was computed for.
    pub value: f64,
    pub probability: f64,
    pub verdict: Verdict,
}

/// Suspicious learned outputs with `from <= t <= to`, ordered by time, then
/// by the observed node's id. `theta` defaults to the store's profiler
/// threshold.
pub fn anomalies(store: &Store, w: WorldId, from: i64, to: i64, theta: Option<f64>) -> Result<Vec<Alert>, GraphError> {
    if from > to {
        return Err(GraphError::Config(format!("range start {from} is after its end {to}")));
    }
    let theta = theta.unwrap_or(store.config().profiler.theta);
    let schema = store.schema();
    let mut out = Vec::new();
    for n in store.nodes(w)? {
        let class = store.node_meta(n)?.class;
        let Some(spec) = &schema.class(class).learned else {
            continue;
        };
        let Some(map) = store.output_map(w, n, spec.output) else {
            continue;
        };
        for (&t, p) in map.range(from..=to) {
            let Some(p) = p.as_ref().and_then(|v| v.as_f64()) else {
                continue;
            };
            if p >= theta {
                continue;
            }
            let Some(&src) = store.links(w, n, spec.via, t, u64::MAX).first() else {
                continue;
            };
            let Some(value) = store.read_value(w, src, spec.value, t).and_then(|v| v.as_f64()) else {
                continue;
            };
            out.push((
                t,
                src,
                Alert {
                    t,
                    node: store.node_label(src),
                    value,
                    probability: p,
                    verdict: Verdict::Suspicious,
                },
            ));
        }
    }
    out.sort_by_key(|(t, src, _)| (*t, *src));
    Ok(out.into_iter().map(|x| x.2).collect())
}
