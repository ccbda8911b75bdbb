// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mda_core::anomaly::anomalies;
use mda_core::bench::{run_bench, BenchConfig, BenchError, Epsilon};
use mda_core::dsl::{parse_model, validate};
use mda_core::graph::{Store, Value};
use mda_core::ingest::{apply_topology, ingest_readings, IngestSummary};
use mda_core::refine::{refine, Failure};
use mda_core::smartgrid::{self, GeneratorConfig};
use mda_core::whatif::{compare_scenarios, evaluate_metric, run_scenario, Scenario, ScenarioResult};
use serde_json::json;

use crate::config::{self, Common, Settings, StoreFlags};
use crate::fail::{Classify, Fail, Outcome};
use crate::session::{self, StoreLock};
use crate::{time, Command};

/// Failures listed on standard error before the rest are summarized.
const SHOWN_FAILURES: usize = 10;

pub fn run(common: Common, cmd: Command) -> Outcome {
    match cmd {
        Command::Check { file } => check(&file, common.json),
        Command::Ingest {
            input,
            topology,
            batch,
            settings,
        } => {
            let s = config::resolve(&common, &settings).usage()?;
            ingest(&s, input.as_deref(), topology.as_deref(), batch.unwrap_or(s.batch))
        }
        Command::Query { node, attr, at } => query(&settings(&common)?, &node, &attr, at),
        Command::Stats => stats(&settings(&common)?),
        Command::Anomalies { from, to, threshold } => alerts(&settings(&common)?, from, to, threshold),
        Command::Whatif { scenarios } => whatif(&settings(&common)?, &scenarios),
        Command::Bench {
            signal,
            points,
            epsilon,
            reads,
            scan_reads,
            seed,
        } => bench(
            &BenchConfig {
                signal,
                points,
                epsilon,
                reads,
                scan_reads,
                seed,
            },
            common.json,
        ),
        Command::Generate {
            out,
            settings,
            demo,
            meters,
            days,
            seed,
        } => {
            let mut cfg = match &settings {
                Some(p) => serde_json::from_str(&read(p)?)
                    .with_context(|| format!("invalid generator settings {}", p.display()))
                    .usage()?,
                None if demo => GeneratorConfig::demo(),
                None => GeneratorConfig::default(),
            };
            cfg.meter_count = meters.unwrap_or(cfg.meter_count);
            cfg.days = days.unwrap_or(cfg.days);
            cfg.seed = seed.unwrap_or(cfg.seed);
            generate(&cfg, &out, common.json)
        }
    }
}

fn settings(common: &Common) -> Outcome<Settings> {
    config::resolve(common, &StoreFlags::default()).usage()
}

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .usage()
}

fn print_json(v: &serde_json::Value) {
    out!("{}", serde_json::to_string_pretty(v).expect("JSON values serialize"));
}

fn show(v: &Option<Value>) -> String {
    v.as_ref().map_or_else(|| "novalue".to_string(), Value::to_string)
}

fn report_failures(failures: &[Failure]) {
    for f in failures.iter().take(SHOWN_FAILURES) {
        eprintln!("failed: {}.{} at {}: {}", f.node, f.member, time::format(f.t), f.reason);
    }
    if failures.len() > SHOWN_FAILURES {
        eprintln!("failed: {} more", failures.len() - SHOWN_FAILURES);
    }
}

/// Locks and opens an existing store.
fn open_existing(s: &Settings) -> Outcome<(StoreLock, Store)> {
    let dir = s.store_dir().usage()?;
    let lock = StoreLock::acquire(dir).usage()?;
    let store = session::open(dir).usage()?;
    Ok((lock, store))
}

fn check(file: &Path, json: bool) -> Outcome {
    let text = read(file)?;
    let diags = match parse_model(&text) {
        Ok(m) => validate(&m),
        Err(d) => d,
    };
    let name = file.display().to_string();
    for d in &diags {
        eprintln!("{}", d.render(&name));
    }
    if json {
        let list: Vec<_> = diags
            .iter()
            .map(|d| {
                json!({
                    "line": d.line,
                    "col": d.col,
                    "severity": d.severity.to_string(),
                    "kind": format!("{:?}", d.kind),
                    "message": d.message,
                })
            })
            .collect();
        print_json(&json!({ "file": name, "valid": diags.is_empty(), "diagnostics": list }));
    } else if diags.is_empty() {
        out!("{name}: ok");
    }
    if diags.is_empty() {
        Ok(())
    } else {
        Err(Fail::Domain(anyhow!("{name}: {} problem(s)", diags.len())))
    }
}

fn ingest(s: &Settings, input: Option<&Path>, topology: Option<&Path>, batch: usize) -> Outcome {
    if input.is_none() && topology.is_none() {
        return Err(Fail::Usage(anyhow!("nothing to ingest: pass --input, --topology or both")));
    }
    if batch == 0 {
        return Err(Fail::Usage(anyhow!("batch must be at least 1")));
    }
    let dir = s.store_dir().usage()?;
    let _lock = StoreLock::acquire(dir).usage()?;
    let (mut store, created) = session::open_or_create(dir, s.model.as_deref(), &s.store_config)?;
    let w = store.root();
    let open = |p: &Path| {
        File::open(p)
            .map(BufReader::new)
            .with_context(|| format!("cannot read {}", p.display()))
            .usage()
    };
    let mut topology_rows = None;
    if let Some(p) = topology {
        let rows = apply_topology(&mut store, w, open(p)?)
            .with_context(|| p.display().to_string())
            .domain()?;
        topology_rows = Some(rows);
    }
    let summary = match input {
        Some(p) => ingest_readings(&mut store, w, open(p)?, batch)
            .with_context(|| p.display().to_string())
            .domain()?,
        None => {
            let r = refine(&mut store, w).domain()?;
            IngestSummary {
                rows: 0,
                tasks: r.tasks_run,
                values_written: r.values_written,
                failures: r.failures,
            }
        }
    };
    // Nothing reaches the disk unless every row was accepted.
    store.persist(dir).usage()?;
    report_failures(&summary.failures);
    if s.json {
        print_json(&json!({
            "created": created,
            "topologyRows": topology_rows,
            "rows": summary.rows,
            "tasks": summary.tasks,
            "valuesWritten": summary.values_written,
            "failures": summary.failures,
        }));
    } else {
        if let Some(n) = topology_rows {
            out!("topology={n}");
        }
        out!("rows={} tasks={} failures={}", summary.rows, summary.tasks, summary.failures.len());
    }
    Ok(())
}

fn query(s: &Settings, node: &str, attr: &str, at: i64) -> Outcome {
    let (_lock, store) = open_existing(s)?;
    let w = store.root();
    let n = store.resolve_node(w, node).domain()?;
    let v = store.get_attribute(w, n, attr, at).domain()?;
    if s.json {
        print_json(&json!({ "node": node, "attr": attr, "t": at, "time": time::format(at), "value": v }));
    } else {
        out!("{}", show(&v));
    }
    Ok(())
}

fn stats(s: &Settings) -> Outcome {
    let (_lock, store) = open_existing(s)?;
    let stats = store.compression_stats();
    if s.json {
        let rows: Vec<_> = stats
            .iter()
            .map(|((class, attr), c)| {
                json!({
                    "class": class,
                    "attribute": attr,
                    "rawPoints": c.raw_points,
                    "segments": c.segments,
                    "openPoints": c.open_points,
                    "storedScalars": c.stored_scalars,
                    "ratio": c.ratio(),
                })
            })
            .collect();
        print_json(&json!(rows));
        return Ok(());
    }
    let mut table = vec![["class", "attribute", "rawPoints", "segments", "storedScalars", "ratio"].map(String::from)];
    for ((class, attr), c) in &stats {
        table.push([
            class.clone(),
            attr.clone(),
            c.raw_points.to_string(),
            c.segments.to_string(),
            c.stored_scalars.to_string(),
            c.ratio().map_or_else(|| "-".into(), |r| format!("{r:.4}")),
        ]);
    }
    let widths: Vec<usize> = (0..6).map(|i| table.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    for row in &table {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out!("{}", cells.join("  ").trim_end());
    }
    Ok(())
}

fn alerts(s: &Settings, from: i64, to: i64, threshold: Option<f64>) -> Outcome {
    if from > to {
        return Err(Fail::Usage(anyhow!(
            "--from {} is after --to {}",
            time::format(from),
            time::format(to)
        )));
    }
    if let Some(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Fail::Usage(anyhow!("--threshold must lie in [0, 1]")));
        }
    }
    let (_lock, store) = open_existing(s)?;
    let found = anomalies(&store, store.root(), from, to, threshold.or(s.theta)).domain()?;
    if s.json {
        let rows: Vec<_> = found
            .iter()
            .map(|a| {
                json!({
                    "t": a.t,
                    "time": time::format(a.t),
                    "node": a.node,
                    "value": a.value,
                    "probability": a.probability,
                    "verdict": a.verdict.to_string(),
                })
            })
            .collect();
        print_json(&json!(rows));
    } else {
        for a in &found {
            out!("{},{},{},{:e},{}", time::format(a.t), a.node, a.value, a.probability, a.verdict);
        }
    }
    Ok(())
}

fn divergence_json(store: &Store, r: &ScenarioResult) -> serde_json::Value {
    let rows: Vec<_> = r
        .divergence
        .iter()
        .map(|d| {
            json!({
                "node": store.node_label(d.node),
                "member": store.schema().member(d.member).name,
                "base": d.a,
                "fork": d.b,
            })
        })
        .collect();
    json!(rows)
}

fn whatif(s: &Settings, paths: &[PathBuf]) -> Outcome {
    // The store is never persisted here, so the forks stay in memory.
    let (_lock, mut store) = open_existing(s)?;
    let mut scenarios = Vec::new();
    for p in paths {
        let sc = Scenario::from_json(&read(p)?)
            .with_context(|| format!("invalid scenario {}", p.display()))
            .domain()?;
        scenarios.push(sc);
    }
    let mut results = Vec::new();
    let mut metrics = Vec::new();
    for sc in &scenarios {
        let scope = sc.diff_scope(&store).with_context(|| sc.name.clone()).domain()?;
        let r = run_scenario(&mut store, sc, &scope).with_context(|| sc.name.clone()).domain()?;
        let metric = match &sc.metric {
            Some(m) => Some(
                evaluate_metric(&store, r.world, m, sc.report_node.as_deref(), sc.query_t)
                    .with_context(|| sc.name.clone())
                    .domain()?,
            ),
            None => None,
        };
        results.push(r);
        metrics.push(metric);
    }
    // Ranking needs one metric on one reporting node. Scenarios without a
    // metric, such as a baseline with no actions, are ranked by it too.
    let mut shared: Vec<(&String, Option<&str>)> = scenarios
        .iter()
        .filter_map(|x| x.metric.as_ref().map(|m| (m, x.report_node.as_deref())))
        .collect();
    shared.sort();
    shared.dedup();
    let ranking = match shared[..] {
        [(m, node)] if scenarios.len() > 1 => Some(compare_scenarios(&store, &results, m, node).domain()?),
        _ => None,
    };
    if s.json {
        let list: Vec<_> = results
            .iter()
            .zip(&scenarios)
            .zip(&metrics)
            .map(|((r, sc), m)| {
                json!({
                    "name": r.name,
                    "base": r.base.to_string(),
                    "world": r.world.to_string(),
                    "queryT": r.query_t,
                    "tasks": r.report.tasks_run,
                    "valuesWritten": r.report.values_written,
                    "failures": r.report.failures,
                    "divergence": divergence_json(&store, r),
                    "metric": sc.metric.as_ref().map(|e| json!({ "expr": e, "value": m })),
                })
            })
            .collect();
        let ranking = ranking.map(|rs| {
            rs.iter()
                .enumerate()
                .map(|(i, r)| json!({ "rank": i + 1, "name": r.name, "world": r.world.to_string(), "value": r.value }))
                .collect::<Vec<_>>()
        });
        print_json(&json!({ "scenarios": list, "ranking": ranking }));
        return Ok(());
    }
    for ((r, sc), m) in results.iter().zip(&scenarios).zip(&metrics) {
        out!(
            "scenario {} world={} base={} at={} tasks={} failures={}",
            r.name,
            r.world,
            r.base,
            time::format(r.query_t),
            r.report.tasks_run,
            r.report.failures.len()
        );
        report_failures(&r.report.failures);
        if r.divergence.is_empty() {
            out!("no divergence");
        }
        for d in &r.divergence {
            out!(
                "divergence {}.{} {} -> {}",
                store.node_label(d.node),
                store.schema().member(d.member).name,
                show(&d.a),
                show(&d.b)
            );
        }
        if let (Some(e), Some(v)) = (&sc.metric, m) {
            out!("metric {e} = {v}");
        }
    }
    for (i, r) in ranking.iter().flatten().enumerate() {
        out!("rank {} {} {}", i + 1, r.name, r.value);
    }
    Ok(())
}

pub fn parse_bench_epsilon(s: &str) -> Result<Epsilon, String> {
    let number = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("{s:?} is not a number or percentage"));
    match s.strip_suffix('%') {
        Some(p) => Ok(Epsilon::Relative(number(p)? / 100.0)),
        None => Ok(Epsilon::Absolute(number(s)?)),
    }
}

fn bench(cfg: &BenchConfig, json: bool) -> Outcome {
    let r = run_bench(cfg).map_err(|e| match e {
        BenchError::NoPoints | BenchError::Epsilon => Fail::Usage(e.into()),
        other => Fail::Domain(other.into()),
    })?;
    if json {
        print_json(&json!(r));
        return Ok(());
    }
    let signal = serde_json::to_value(r.signal).expect("signal serializes");
    out!(
        "signal={} points={} epsilon={}",
        signal.as_str().unwrap_or_default(),
        r.points,
        r.epsilon
    );
    out!("segments={} storedScalars={} ratio={:.4}", r.segments, r.stored_scalars, r.ratio);
    out!(
        "maxSegmentsPerRead={} meanReadNs={:.1} meanScanNs={:.1} speedup={:.1}",
        r.max_segments_per_read, r.mean_read_ns, r.mean_scan_ns, r.speedup
    );
    Ok(())
}

fn generate(cfg: &GeneratorConfig, out: &Path, json: bool) -> Outcome {
    let ds = smartgrid::generate(cfg).map_err(|e| anyhow!(e)).usage()?;
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create {}", out.display()))
        .usage()?;
    let settings = serde_json::to_string_pretty(cfg).expect("settings serialize") + "\n";
    for (name, body) in [
        ("model.mdm", smartgrid::MODEL.to_string()),
        ("topology.csv", ds.topology_csv()),
        ("readings.csv", ds.readings_csv()),
        ("truth.csv", ds.truth_csv()),
        ("settings.json", settings),
    ] {
        let p = out.join(name);
        fs::write(&p, body)
            .with_context(|| format!("cannot write {}", p.display()))
            .usage()?;
    }
    if json {
        print_json(&json!({
            "out": out.display().to_string(),
            "readings": ds.readings.len(),
            "anomalies": ds.truth.len(),
            "scoredFrom": ds.scored_from(),
            "end": ds.end(),
        }));
    } else {
        out!(
            "readings={} anomalies={} scored={}..{}",
            ds.readings.len(),
            ds.truth.len(),
            time::format(ds.scored_from()),
            time::format(ds.end())
        );
    }
    Ok(())
}
