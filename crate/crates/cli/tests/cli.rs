// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mda_core::graph::{DiffScope, Store};
use mda_core::refine::full_recompute;
use mda_core::smartgrid::{evaluate_detection, generate, meter_name, Dataset, GeneratorConfig, MODEL};
use mda_core::whatif::{run_scenario, Scenario};
use tempfile::TempDir;

const PROFILER_CLASS: &str = r#"class Consumption { att energyConsumed: Double }
class ConsumptionProfiler {
    with "GaussianMixture"
    with resolution "1week"
  dependency consumption: Consumption
  input "consumption | =energyConsumed"
  input "consumption | =HOURS(timestamp)"
  output probability: Double }
"#;

fn mda(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mda"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("mda runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[track_caller]
fn ok(o: Output) -> String {
    assert_eq!(code(&o), 0, "stderr: {}", stderr(&o));
    stdout(&o)
}

/// Writes the fixture files and ingests them into `dir/store`.
fn fixture(dir: &Path, cfg: &GeneratorConfig) -> Dataset {
    let ds = generate(cfg).unwrap();
    fs::write(dir.join("model.mdm"), MODEL).unwrap();
    fs::write(dir.join("topology.csv"), ds.topology_csv()).unwrap();
    fs::write(dir.join("readings.csv"), ds.readings_csv()).unwrap();
    let out = ok(mda(
        dir,
        &[
            "ingest",
            "--store",
            "store",
            "--model",
            "model.mdm",
            "--topology",
            "topology.csv",
            "--input",
            "readings.csv",
        ],
    ));
    assert!(out.contains(&format!("rows={} ", ds.readings.len())), "{out}");
    assert!(out.trim_end().ends_with("failures=0"), "{out}");
    ds
}

fn small() -> GeneratorConfig {
    GeneratorConfig {
        meter_count: 3,
        days: 35,
        ..GeneratorConfig::default()
    }
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    files.sort();
    files
}

#[test]
fn check_examples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("profiler.mdm"), PROFILER_CLASS).unwrap();
    let o = mda(d, &["check", "profiler.mdm"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "profiler.mdm: ok\n");

    fs::write(d.join("cycle.mdm"), "class A {\n  derived x: Double = y\n  derived y: Double = x\n}\n").unwrap();
    let o = mda(d, &["check", "cycle.mdm"]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    assert!(err.contains("cycle.mdm:2:"), "{err}");
    assert!(err.contains("cycle"), "{err}");

    let o = mda(d, &["check", "missing.mdm"]);
    assert_eq!(code(&o), 2);

    let o = mda(d, &["--json", "check", "cycle.mdm"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["valid"], false);
    assert_eq!(v["diagnostics"][0]["line"], 2);
}

#[test]
fn usage_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&mda(tmp.path(), &["frobnicate"])), 2);
    assert_eq!(code(&mda(tmp.path(), &["query", "--store", "nowhere", "--node", "a", "--attr", "b", "--at", "0"])), 2);
    assert_eq!(code(&mda(tmp.path(), &["query", "--store", "s", "--node", "a", "--attr", "b", "--at", "noon"])), 2);
    assert_eq!(code(&mda(tmp.path(), &["ingest", "--store", "s", "--input", "r.csv"])), 2);
    assert_eq!(code(&mda(tmp.path(), &["bench", "--points", "0"])), 2);
    assert_eq!(code(&mda(tmp.path(), &["bench", "--signal", "square"])), 2);
}

#[test]
fn ingest_query_and_stats_on_the_demo_fixture() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let ds = fixture(d, &GeneratorConfig::default());
    assert_eq!(ds.readings.len(), 6720);
    assert!(!d.join("store/store.lock").exists());

    // A raw reading comes back exactly at epsilon 0.
    let r = &ds.readings[100];
    let at = r.t.to_string();
    let node = meter_name(r.meter);
    let got = ok(mda(d, &["query", "--store", "store", "--node", &node, "--attr", "energyConsumed", "--at", &at]));
    assert_eq!(got.trim().parse::<f64>().unwrap(), r.value);
    let got = ok(mda(d, &["query", "--store", "store", "--node", &node, "--attr", "energyConsumed", "--at", "2023-12-31T23:59:59Z"]));
    assert_eq!(got, "novalue\n");

    // Derived values agree with a full recomputation of the stored graph.
    let mut oracle = Store::open(d.join("store")).unwrap();
    let w = oracle.root();
    full_recompute(&mut oracle, w).unwrap();
    for (t, iso) in [(ds.config.start_ms + 5 * 3_600_000, "2024-01-01T05:00:00Z"), (ds.end(), "2024-01-28T23:00:00Z")] {
        let n = oracle.resolve_node(w, "CABLE_1").unwrap();
        let want = oracle.get_attribute(w, n, "load", t).unwrap().unwrap().to_string();
        let got = ok(mda(d, &["query", "--store", "store", "--node", "CABLE_1", "--attr", "load", "--at", iso]));
        assert_eq!(got.trim(), want);
    }
    let o = mda(d, &["query", "--store", "store", "--node", "CABLE_9", "--attr", "load", "--at", "0"]);
    assert_eq!(code(&o), 1);
    let o = mda(d, &["query", "--store", "store", "--node", "CABLE_1", "--attr", "voltage", "--at", "0"]);
    assert_eq!(code(&o), 1);

    // Stats agree with the chains' own counters.
    let v: serde_json::Value = serde_json::from_str(&ok(mda(d, &["--json", "stats", "--store", "store"]))).unwrap();
    let direct = Store::open(d.join("store")).unwrap().compression_stats();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), direct.len());
    for row in rows {
        let key = (row["class"].as_str().unwrap().to_string(), row["attribute"].as_str().unwrap().to_string());
        let c = direct[&key];
        assert_eq!(row["rawPoints"], c.raw_points);
        assert_eq!(row["ratio"].as_f64(), c.ratio());
    }
    let text = ok(mda(d, &["stats", "--store", "store"]));
    assert!(text.starts_with("class"));
    assert!(text.contains("Meter  energyConsumed  6720"), "{text}");
}

#[test]
fn ingest_rejects_bad_rows_and_keeps_the_store() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fixture(d, &GeneratorConfig { days: 2, ..small() });
    let before = snapshot(&d.join("store"));

    fs::write(d.join("empty.csv"), "node_id,attribute,timestamp_ms,value\n").unwrap();
    let out = ok(mda(d, &["ingest", "--store", "store", "--input", "empty.csv"]));
    assert_eq!(out, "rows=0 tasks=0 failures=0\n");

    let later = 1_800_000_000_000i64;
    fs::write(
        d.join("text.csv"),
        format!("node_id,attribute,timestamp_ms,value\nMETER_0,energyConsumed,{later},1.0\nMETER_0,energyConsumed,{},lots\n", later + 1),
    )
    .unwrap();
    let o = mda(d, &["ingest", "--store", "store", "--input", "text.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    fs::write(
        d.join("order.csv"),
        format!("node_id,attribute,timestamp_ms,value\nMETER_0,energyConsumed,{later},1.0\nMETER_0,energyConsumed,{},2.0\n", later - 1),
    )
    .unwrap();
    let o = mda(d, &["ingest", "--store", "store", "--input", "order.csv"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("row 2"), "{}", stderr(&o));

    // Rejected files leave no trace; the empty one rewrote identical bytes.
    assert_eq!(snapshot(&d.join("store")), before);
}

#[test]
fn constant_readings_compress() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("m.mdm"), "class Meter { att energyConsumed: Double }\n").unwrap();
    fs::write(d.join("t.csv"), "op,node_id,arg,target,timestamp_ms\nnode,M,Meter,,\n").unwrap();
    let mut csv = String::from("node_id,attribute,timestamp_ms,value\n");
    for i in 0..10_000 {
        csv.push_str(&format!("M,energyConsumed,{},5.0\n", i * 1000));
    }
    fs::write(d.join("r.csv"), csv).unwrap();
    ok(mda(d, &["ingest", "--store", "s", "--model", "m.mdm", "--topology", "t.csv"]));
    let empty = ok(mda(d, &["stats", "--store", "s"]));
    assert_eq!(empty.lines().count(), 1, "{empty}");
    ok(mda(d, &["ingest", "--store", "s", "--input", "r.csv"]));
    let v: serde_json::Value = serde_json::from_str(&ok(mda(d, &["--json", "stats", "--store", "s"]))).unwrap();
    assert!(v[0]["ratio"].as_f64().unwrap() >= 0.99, "{v}");
}

#[test]
fn anomalies_on_small_fixtures() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let cfg = GeneratorConfig {
        days: 42,
        ..small()
    };
    let ds = fixture(d, &cfg);
    assert!(!ds.truth.is_empty());
    let from = ds.scored_from().to_string();
    let to = ds.end().to_string();
    let json = ok(mda(d, &["--json", "anomalies", "--store", "store", "--from", &from, "--to", &to]));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&json).unwrap();
    let alerts: Vec<(String, i64)> = rows
        .iter()
        .map(|r| (r["node"].as_str().unwrap().to_string(), r["t"].as_i64().unwrap()))
        .collect();
    assert!(rows.iter().all(|r| r["verdict"] == "suspicious" && r["probability"].as_f64().unwrap() < 0.05));
    let truth: Vec<(String, i64)> = ds.truth.iter().map(|x| (meter_name(x.meter), x.t)).collect();
    let m = evaluate_detection(&alerts, &truth, 0, ds.scored_population());
    assert!(m.recall >= 0.9, "{m:?}");

    let text = ok(mda(d, &["anomalies", "--store", "store", "--from", &from, "--to", &to]));
    assert_eq!(text.lines().count(), alerts.len());
    let first = text.lines().next().unwrap();
    assert_eq!(first.split(',').count(), 5);
    assert!(first.ends_with(",suspicious"));

    let empty = ok(mda(d, &["anomalies", "--store", "store", "--from", "2030-01-01", "--to", "2030-02-01"]));
    assert_eq!(empty, "");
    let o = mda(d, &["anomalies", "--store", "store", "--from", &to, "--to", &from]);
    assert_eq!(code(&o), 2);

    let quiet = tmp.path().join("quiet");
    fs::create_dir(&quiet).unwrap();
    fixture(&quiet, &GeneratorConfig { anomaly_rate: 0.0, ..cfg });
    let text = ok(mda(&quiet, &["anomalies", "--store", "store", "--from", &from, "--to", &to, "--threshold", "1e-9"]));
    assert!(text.lines().count() <= 1, "{text}");
}

#[test]
fn whatif_examples() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let ds = fixture(d, &GeneratorConfig { days: 3, ..small() });
    let t = ds.config.start_ms + 30 * 3_600_000;
    let disconnect = format!(
        r#"{{"name":"maintenance","actions":[{{"type":"disconnect","node":"CABLE_1","rel":"meters","target":"METER_1","t":{t}}}],
            "queryT":{t},"metric":"SUM(cables.load)","reportNode":"CONCENTRATOR_0"}}"#
    );
    fs::write(d.join("cut.json"), &disconnect).unwrap();
    fs::write(d.join("noop.json"), format!(r#"{{"name":"noop","queryT":{t}}}"#)).unwrap();
    let before = snapshot(&d.join("store"));

    assert_eq!(ok(mda(d, &["whatif", "--store", "store", "noop.json"])).lines().nth(1), Some("no divergence"));

    let first = ok(mda(d, &["whatif", "--store", "store", "cut.json"]));
    let second = ok(mda(d, &["whatif", "--store", "store", "cut.json"]));
    assert_eq!(first, second);

    // Oracle: the same scenario replayed in process and fully recomputed.
    let mut s = Store::open(d.join("store")).unwrap();
    let sc = Scenario::from_json(&disconnect).unwrap();
    let r = run_scenario(&mut s, &sc, &DiffScope::default()).unwrap();
    full_recompute(&mut s, r.world).unwrap();
    let want: Vec<String> = s
        .diff_worlds(r.base, r.world, &DiffScope::default(), t)
        .unwrap()
        .iter()
        .map(|x| {
            format!(
                "divergence {}.{} {} -> {}",
                s.node_label(x.node),
                s.schema().member(x.member).name,
                x.a.as_ref().unwrap(),
                x.b.as_ref().unwrap()
            )
        })
        .collect();
    let got: Vec<&str> = first.lines().filter(|l| l.starts_with("divergence")).collect();
    assert_eq!(got, want);
    assert_eq!(got.len(), 1);
    assert!(first.contains("metric SUM(cables.load) = "));

    let both = ok(mda(d, &["whatif", "--store", "store", "noop.json", "cut.json"]));
    let ranks: Vec<&str> = both.lines().filter(|l| l.starts_with("rank")).collect();
    assert!(ranks[0].starts_with("rank 1 maintenance "), "{both}");
    assert!(ranks[1].starts_with("rank 2 noop"), "{both}");

    fs::write(d.join("bad.json"), "{\"name\":").unwrap();
    assert_eq!(code(&mda(d, &["whatif", "--store", "store", "bad.json"])), 1);
    let past = disconnect.replace(&format!("\"t\":{t}"), "\"t\":0");
    fs::write(d.join("past.json"), past).unwrap();
    let o = mda(d, &["whatif", "--store", "store", "past.json"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("action 0"), "{}", stderr(&o));

    assert_eq!(snapshot(&d.join("store")), before);
}

#[test]
fn bench_reports() {
    let tmp = TempDir::new().unwrap();
    let out = ok(mda(tmp.path(), &["bench", "--signal", "constant", "--points", "10000", "--epsilon", "0"]));
    assert!(out.contains("ratio=0.9998"), "{out}");
    assert!(out.contains("maxSegmentsPerRead=1"), "{out}");
    let ratio = |signal: &str| {
        let o = ok(mda(tmp.path(), &["--json", "bench", "--signal", signal, "--epsilon", "1%", "--reads", "100", "--scan-reads", "2"]));
        let v: serde_json::Value = serde_json::from_str(&o).unwrap();
        v["ratio"].as_f64().unwrap()
    };
    let (c, s, r) = (ratio("constant"), ratio("sine"), ratio("random"));
    assert!(c > s && s > r && s >= 0.45, "{c} {s} {r}");
}

#[test]
fn generate_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = ok(mda(d, &["generate", "--out", "a"]));
    assert!(out.starts_with("readings=6720 "), "{out}");
    ok(mda(d, &["generate", "--out", "b"]));
    assert_eq!(
        snapshot(&d.join("a")).into_iter().map(|x| x.1).collect::<Vec<_>>(),
        snapshot(&d.join("b")).into_iter().map(|x| x.1).collect::<Vec<_>>()
    );
    let text = fs::read_to_string(d.join("a/settings.json")).unwrap();
    assert_eq!(serde_json::from_str::<GeneratorConfig>(&text).unwrap(), GeneratorConfig::default());
    fs::write(d.join("g.json"), r#"{"meterCount": 2, "days": 1, "anomalyRate": 0}"#).unwrap();
    let out = ok(mda(d, &["generate", "--out", "c", "--settings", "g.json", "--seed", "9"]));
    assert!(out.starts_with("readings=48 anomalies=0"), "{out}");
    fs::write(d.join("bad.json"), r#"{"meterCount": 0}"#).unwrap();
    assert_eq!(code(&mda(d, &["generate", "--out", "x", "--settings", "bad.json"])), 2);
}

#[test]
fn config_file_and_flags() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let ds = generate(&GeneratorConfig { days: 1, ..small() }).unwrap();
    fs::write(d.join("model.mdm"), MODEL).unwrap();
    fs::write(d.join("topology.csv"), ds.topology_csv()).unwrap();
    fs::write(
        d.join("analytics.cfg"),
        "store = \"data/store\"\nmodel = \"model.mdm\"\nbatch = 7\n\n[epsilon]\ndefault = 0.25\n\"Meter.energyConsumed\" = 0.5\n\n[profiler]\nn_min = 5\ntheta = 0.01\n",
    )
    .unwrap();
    ok(mda(d, &["ingest", "--topology", "topology.csv"]));
    let cfg = Store::open(d.join("data/store")).unwrap().config().clone();
    assert_eq!(cfg.default_epsilon, 0.25);
    assert_eq!(cfg.epsilon["Meter.energyConsumed"], 0.5);
    assert_eq!(cfg.profiler.n_min, 5);
    assert_eq!(cfg.profiler.theta, 0.01);

    ok(mda(
        d,
        &["ingest", "--store", "other", "--topology", "topology.csv", "--epsilon", "0", "--epsilon-for", "Meter.energyConsumed=0.1", "--n-min", "9"],
    ));
    let cfg = Store::open(d.join("other")).unwrap().config().clone();
    assert_eq!(cfg.default_epsilon, 0.0);
    assert_eq!(cfg.epsilon["Meter.energyConsumed"], 0.1);
    assert_eq!(cfg.profiler.n_min, 9);
    assert_eq!(cfg.profiler.theta, 0.01);

    fs::write(d.join("bad.cfg"), "colour = \"blue\"\n").unwrap();
    assert_eq!(code(&mda(d, &["--config", "bad.cfg", "stats"])), 2);
    let o = mda(d, &["ingest", "--topology", "topology.csv", "--epsilon", "-1", "--store", "neg"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn a_held_lock_blocks_other_commands() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fixture(d, &GeneratorConfig { days: 1, ..small() });
    fs::write(d.join("store/store.lock"), "12345\n").unwrap();
    let o = mda(d, &["stats", "--store", "store"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("store.lock"), "{}", stderr(&o));
    // The lock belongs to someone else and stays.
    assert!(d.join("store/store.lock").exists());
    fs::remove_file(d.join("store/store.lock")).unwrap();
    ok(mda(d, &["stats", "--store", "store"]));
    assert!(!d.join("store/store.lock").exists());
}
