// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! CSV loading of topology and readings.
//!
//! Readings: `node_id,attribute,timestamp_ms,value`.
//! Topology: `op,node_id,arg,target,timestamp_ms`, where `op` is one of
//! `node` (arg = class), `link` / `unlink` (arg = relation, target = node)
//! or `set` (arg = attribute, target = value).

use std::io::Read;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{GraphError, NodeId, Store, Value, WorldId};
use crate::refine::{refine, Failure};
use crate::schema::MemberId;

pub const READINGS_HEADER: [&str; 4] = ["node_id", "attribute", "timestamp_ms", "value"];
pub const TOPOLOGY_HEADER: [&str; 5] = ["op", "node_id", "arg", "target", "timestamp_ms"];
pub const DEFAULT_BATCH: usize = 1000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bad header: expected {expected}, found {found}")]
    Header { expected: String, found: String },
    /// `row` counts data rows from 1; the header is not a row.
    #[error("row {row}: {reason}")]
    Row { row: u64, reason: String },
    #[error("row {row}: {error}")]
    Graph { row: u64, error: GraphError },
    #[error(transparent)]
    Refine(GraphError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestSummary {
    pub rows: u64,
    pub tasks: u64,
    pub values_written: u64,
    pub failures: Vec<Failure>,
}

fn reader<R: Read>(input: R, header: &[&str]) -> Result<csv::Reader<R>, IngestError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found = r
        .headers()
        .map_err(|e| IngestError::Header {
            expected: header.join(","),
            found: e.to_string(),
        })?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(IngestError::Header {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(r)
}

fn records<R: Read>(r: csv::Reader<R>) -> impl Iterator<Item = (u64, Result<csv::StringRecord, IngestError>)> {
    r.into_records().enumerate().map(|(i, rec)| {
        let row = i as u64 + 1;
        (
            row,
            rec.map_err(|e| IngestError::Row {
                row,
                reason: e.to_string(),
            }),
        )
    })
}

fn timestamp(row: u64, field: &str) -> Result<i64, IngestError> {
    field.parse().map_err(|_| IngestError::Row {
        row,
        reason: format!("timestamp {field:?} is not an integer"),
    })
}

fn parse_value(
    store: &Store,
    w: WorldId,
    row: u64,
    node: &str,
    attr: &str,
    text: &str,
) -> Result<(NodeId, MemberId, Value), IngestError> {
    let graph = |error| IngestError::Graph { row, error };
    let n = store.resolve_node(w, node).map_err(graph)?;
    let m = store.member_of(n, attr).map_err(graph)?;
    let ty = store
        .schema()
        .member(m)
        .value_type()
        .filter(|_| !store.schema().member(m).is_computed())
        .ok_or_else(|| graph(GraphError::NotAnAttribute(store.schema().qualified(m))))?;
    let v = Value::parse(text, ty).ok_or_else(|| IngestError::Row {
        row,
        reason: format!("{text:?} is not a valid {ty} for {}", store.schema().qualified(m)),
    })?;
    Ok((n, m, v))
}

/// Applies topology rows in order. Returns the number of rows.
pub fn apply_topology<R: Read>(store: &mut Store, w: WorldId, input: R) -> Result<u64, IngestError> {
    let mut rows = 0;
    for (row, rec) in records(reader(input, &TOPOLOGY_HEADER)?) {
        let rec = rec?;
        let graph = |error| IngestError::Graph { row, error };
        let (op, node, arg, target) = (&rec[0], &rec[1], &rec[2], &rec[3]);
        match op {
            "node" => {
                store.create_named_node(w, arg, node).map_err(graph)?;
            }
            "link" | "unlink" => {
                let t = timestamp(row, &rec[4])?;
                let n = store.resolve_node(w, node).map_err(graph)?;
                let to = store.resolve_node(w, target).map_err(graph)?;
                if op == "link" {
                    store.add_relation(w, n, arg, to, t).map_err(graph)?;
                } else {
                    store.remove_relation(w, n, arg, to, t).map_err(graph)?;
                }
            }
            "set" => {
                let t = timestamp(row, &rec[4])?;
                let (n, m, v) = parse_value(store, w, row, node, arg, target)?;
                store.set_attribute_id(w, n, m, t, v).map_err(graph)?;
            }
            other => {
                return Err(IngestError::Row {
                    row,
                    reason: format!("unknown operation {other:?}"),
                })
            }
        }
        rows += 1;
    }
    Ok(rows)
}

/// Appends readings, refining `w` after every `batch` rows and at the end.
/// The open tails of `w`'s series are sealed into segments before the last
/// refine. Stops at the first bad row; rows before it stay applied.
pub fn ingest_readings<R: Read>(
    store: &mut Store,
    w: WorldId,
    input: R,
    batch: usize,
) -> Result<IngestSummary, IngestError> {
    let batch = batch.max(1);
    let mut summary = IngestSummary::default();
    let absorb = |store: &mut Store, summary: &mut IngestSummary| -> Result<(), IngestError> {
        let r = refine(store, w).map_err(IngestError::Refine)?;
        summary.tasks += r.tasks_run;
        summary.values_written += r.values_written;
        summary.failures.extend(r.failures);
        Ok(())
    };
    for (row, rec) in records(reader(input, &READINGS_HEADER)?) {
        let rec = rec?;
        let t = timestamp(row, &rec[2])?;
        let (n, m, v) = parse_value(store, w, row, &rec[0], &rec[1], &rec[3])?;
        store
            .set_attribute_id(w, n, m, t, v)
            .map_err(|error| IngestError::Graph { row, error })?;
        summary.rows += 1;
        if summary.rows % batch as u64 == 0 {
            absorb(store, &mut summary)?;
        }
    }
    // Close open buffers so a snapshot taken now stores segments.
    store.seal(w).map_err(IngestError::Refine)?;
    absorb(store, &mut summary)?;
    Ok(summary)
}
