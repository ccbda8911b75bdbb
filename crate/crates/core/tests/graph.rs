// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use mda_core::graph::{DiffScope, GraphError, NodeId, Store, StoreConfig, Value, WorldId, WriteKind};
use mda_core::schema::Schema;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODEL: &str = "
class Meter {
  att energy: Double
  att count: Long
  att label: String
  att on: Bool
}
class Cable {
  att capacity: Double
  rel meters: Meter[]
  rel main: Meter
}
";

fn store() -> Store {
    store_with(StoreConfig::default())
}

fn store_with(cfg: StoreConfig) -> Store {
    Store::new(Schema::parse(MODEL).unwrap(), cfg).unwrap()
}

fn d(v: f64) -> Value {
    Value::Double(v)
}

fn l(v: i64) -> Value {
    Value::Long(v)
}

#[test]
fn create_node_examples() {
    let mut s = store();
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    assert_eq!(s.get_attribute(root, m, "energy", 0).unwrap(), None);
    assert!(matches!(s.create_node(root, "Nope"), Err(GraphError::UnknownClass(_))));
    assert!(matches!(s.create_node(WorldId(9), "Meter"), Err(GraphError::UnknownWorld(_))));

    let child = s.fork_world(root).unwrap();
    let c = s.create_node(child, "Meter").unwrap();
    assert!(s.is_visible(child, c, u64::MAX));
    assert!(!s.is_visible(root, c, u64::MAX));
    assert!(matches!(
        s.get_attribute(root, c, "energy", 0),
        Err(GraphError::NotVisible { .. })
    ));

    let ids: BTreeSet<NodeId> = (0..1000).map(|_| s.create_node(root, "Cable").unwrap()).collect();
    assert_eq!(ids.len(), 1000);
}

#[test]
fn named_nodes() {
    let mut s = store();
    let root = s.root();
    let a = s.create_named_node(root, "Meter", "M1").unwrap();
    assert_eq!(s.node_by_name(root, "M1").unwrap(), Some(a));
    assert_eq!(s.resolve_node(root, "M1").unwrap(), a);
    assert_eq!(s.resolve_node(root, &a.to_string()).unwrap(), a);
    assert!(matches!(s.create_named_node(root, "Meter", "M1"), Err(GraphError::DuplicateName(_))));
    let child = s.fork_world(root).unwrap();
    let b = s.create_named_node(child, "Meter", "M2").unwrap();
    assert_eq!(s.node_by_name(root, "M2").unwrap(), None);
    assert_eq!(s.node_by_name(child, "M2").unwrap(), Some(b));
}

#[test]
fn set_and_get_examples() {
    let mut s = store();
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    let r = s.set_attribute(root, m, "energy", 1000, d(5.0)).unwrap();
    assert!(r.seq > 0);
    assert_eq!(s.get_attribute(root, m, "energy", 1000).unwrap(), Some(d(5.0)));
    assert_eq!(s.get_attribute(root, m, "energy", 999).unwrap(), None);
    assert_eq!(s.get_attribute(root, m, "energy", 5000).unwrap(), Some(d(5.0)));
    assert!(matches!(
        s.set_attribute(root, m, "energy", 1000, d(6.0)),
        Err(GraphError::OutOfOrder { t: 1000, last: 1000, .. })
    ));
    assert!(matches!(
        s.set_attribute(root, m, "energy", 2000, d(f64::NAN)),
        Err(GraphError::NonFinite(_))
    ));
    assert!(matches!(
        s.set_attribute(root, m, "count", 2000, d(1.5)),
        Err(GraphError::TypeMismatch { .. })
    ));
    assert!(matches!(
        s.set_attribute(root, m, "nope", 2000, d(1.5)),
        Err(GraphError::UnknownMember { .. })
    ));
    // Long widens into a Double attribute.
    s.set_attribute(root, m, "energy", 2000, l(7)).unwrap();
    assert_eq!(s.get_attribute(root, m, "energy", 2500).unwrap(), Some(d(7.0)));
    s.set_attribute(root, m, "label", 10, Value::Str("x".into())).unwrap();
    s.set_attribute(root, m, "on", 10, Value::Bool(true)).unwrap();
    assert_eq!(s.get_attribute(root, m, "label", 11).unwrap(), Some(Value::Str("x".into())));
    assert_eq!(s.get_attribute(root, m, "on", 9).unwrap(), None);
}

#[test]
fn series_reads_within_epsilon() {
    let eps = 0.01;
    let mut cfg = StoreConfig::default();
    cfg.epsilon.insert("Meter.energy".into(), eps);
    let mut s = store_with(cfg);
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let raw: Vec<(i64, f64)> = (0..10_000)
        .map(|i| {
            let t = i as i64 * 60_000;
            (t, 3.0 * (i as f64 / 300.0).sin() + rng.random_range(-0.004..0.004))
        })
        .collect();
    for &(t, v) in &raw {
        s.set_attribute(root, m, "energy", t, d(v)).unwrap();
    }
    assert!(s.segment_count() > 0);
    for _ in 0..100 {
        let (t, v) = raw[rng.random_range(0..raw.len())];
        let got = s.get_attribute(root, m, "energy", t).unwrap().unwrap().as_f64().unwrap();
        assert!((got - v).abs() <= eps, "t={t} read {got} raw {v}");
    }
}

#[test]
fn fork_examples() {
    let mut s = store();
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    s.set_attribute(root, m, "energy", 100, d(1.0)).unwrap();
    s.set_attribute(root, m, "count", 100, l(1)).unwrap();
    let child = s.fork_world(root).unwrap();
    assert_eq!(s.parent(child).unwrap(), Some(root));
    assert_eq!(s.get_attribute(child, m, "energy", 150).unwrap(), Some(d(1.0)));

    s.set_attribute(root, m, "energy", 200, d(2.0)).unwrap();
    s.set_attribute(root, m, "count", 200, l(2)).unwrap();
    assert_eq!(s.get_attribute(child, m, "energy", 250).unwrap(), Some(d(1.0)));
    assert_eq!(s.get_attribute(child, m, "count", 250).unwrap(), Some(l(1)));

    // The child continues its own history after the inherited timestamp.
    assert!(s.set_attribute(child, m, "energy", 100, d(9.0)).is_err());
    s.set_attribute(child, m, "energy", 150, d(3.0)).unwrap();
    assert_eq!(s.get_attribute(child, m, "energy", 160).unwrap(), Some(d(3.0)));
    assert_eq!(s.get_attribute(child, m, "energy", 120).unwrap(), Some(d(1.0)));
    assert_eq!(s.get_attribute(root, m, "energy", 160).unwrap(), Some(d(1.0)));
    assert_eq!(s.get_attribute(root, m, "energy", 250).unwrap(), Some(d(2.0)));
}

#[test]
fn fork_of_fork_resolves_through_the_chain() {
    let mut s = store();
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    s.set_attribute(root, m, "count", 1, l(1)).unwrap();
    let a = s.fork_world(root).unwrap();
    s.set_attribute(a, m, "count", 2, l(2)).unwrap();
    let b = s.fork_world(a).unwrap();
    s.set_attribute(b, m, "count", 3, l(3)).unwrap();
    s.set_attribute(a, m, "count", 4, l(40)).unwrap();
    s.set_attribute(root, m, "count", 5, l(500)).unwrap();
    let read = |w| (1..=6).map(|t| s.get_attribute(w, m, "count", t).unwrap()).collect::<Vec<_>>();
    assert_eq!(read(b), vec![Some(l(1)), Some(l(2)), Some(l(3)), Some(l(3)), Some(l(3)), Some(l(3))]);
    assert_eq!(read(a), vec![Some(l(1)), Some(l(2)), Some(l(2)), Some(l(40)), Some(l(40)), Some(l(40))]);
    assert_eq!(read(root), vec![Some(l(1)), Some(l(1)), Some(l(1)), Some(l(1)), Some(l(500)), Some(l(500))]);
}

#[test]
fn parent_appends_after_fork_do_not_leak() {
    // The parent keeps appending into the buffer the fork observed.
    let mut cfg = StoreConfig::default();
    cfg.epsilon.insert("Meter.energy".into(), 0.5);
    let mut s = store_with(cfg);
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    for i in 0..50 {
        s.set_attribute(root, m, "energy", i * 10, d(i as f64 * 0.1)).unwrap();
    }
    let child = s.fork_world(root).unwrap();
    let probes: Vec<i64> = (-5..600).collect();
    let before: Vec<_> = probes.iter().map(|t| s.get_attribute(child, m, "energy", *t).unwrap()).collect();
    for i in 50..400 {
        s.set_attribute(root, m, "energy", i * 10, d((i as f64 * 0.1).sin())).unwrap();
    }
    let after: Vec<_> = probes.iter().map(|t| s.get_attribute(child, m, "energy", *t).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn relation_examples() {
    let mut s = store();
    let root = s.root();
    let c = s.create_node(root, "Cable").unwrap();
    let m1 = s.create_node(root, "Meter").unwrap();
    let m2 = s.create_node(root, "Meter").unwrap();
    s.add_relation(root, c, "meters", m1, 10).unwrap();
    assert_eq!(s.get_relations(root, c, "meters", 10).unwrap(), vec![m1]);
    assert_eq!(s.get_relations(root, c, "meters", 9).unwrap(), vec![]);
    s.add_relation(root, c, "meters", m2, 10).unwrap();
    s.remove_relation(root, c, "meters", m1, 20).unwrap();
    assert_eq!(s.get_relations(root, c, "meters", 15).unwrap(), vec![m1, m2]);
    assert_eq!(s.get_relations(root, c, "meters", 20).unwrap(), vec![m2]);

    // Cardinality one.
    s.add_relation(root, c, "main", m1, 10).unwrap();
    assert!(matches!(s.add_relation(root, c, "main", m2, 30), Err(GraphError::Cardinality { .. })));
    s.remove_relation(root, c, "main", m1, 30).unwrap();
    s.add_relation(root, c, "main", m2, 30).unwrap();
    assert_eq!(s.get_relations(root, c, "main", 30).unwrap(), vec![m2]);

    // Contract violations.
    assert!(matches!(s.remove_relation(root, c, "meters", m1, 40), Err(GraphError::NotLinked { .. })));
    assert!(matches!(s.add_relation(root, c, "meters", m2, 40), Err(GraphError::AlreadyLinked { .. })));
    assert!(matches!(s.add_relation(root, c, "meters", c, 40), Err(GraphError::WrongTarget { .. })));
    assert!(matches!(s.add_relation(root, c, "meters", m1, 5), Err(GraphError::RelationOrder { .. })));
    assert!(matches!(s.add_relation(root, c, "meters", NodeId(999), 40), Err(GraphError::UnknownNode(_))));
    assert!(matches!(s.add_relation(root, c, "capacity", m1, 40), Err(GraphError::NotARelation(_))));
    assert_eq!(s.referrers(root, m1).len(), 2);
}

#[test]
fn disconnect_in_fork_leaves_parent_topology() {
    let mut s = store();
    let root = s.root();
    let c = s.create_node(root, "Cable").unwrap();
    let m = s.create_node(root, "Meter").unwrap();
    s.add_relation(root, c, "meters", m, 10).unwrap();
    let child = s.fork_world(root).unwrap();
    s.remove_relation(child, c, "meters", m, 20).unwrap();
    assert_eq!(s.get_relations(child, c, "meters", 25).unwrap(), vec![]);
    assert_eq!(s.get_relations(root, c, "meters", 25).unwrap(), vec![m]);
    assert_eq!(s.get_relations(child, c, "meters", 15).unwrap(), vec![m]);
}

#[test]
fn forks_do_not_copy_segments() {
    let mut cfg = StoreConfig::default();
    cfg.epsilon.insert("Meter.energy".into(), 1e-3);
    let mut s = store_with(cfg);
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    for i in 0..1_000_000i64 {
        let x = i as f64 / 5_000.0;
        s.set_attribute(root, m, "energy", i * 1000, d(x.sin() + 0.3 * (3.1 * x).cos())).unwrap();
    }
    let segments = s.segment_count();
    assert!(segments > 0);
    let probe = s.get_attribute(root, m, "energy", 123_456_789).unwrap();
    let mut last = root;
    for i in 0..1000 {
        last = s.fork_world(if i % 2 == 0 { root } else { last }).unwrap();
    }
    assert_eq!(s.segment_count(), segments);
    assert_eq!(s.get_attribute(last, m, "energy", 123_456_789).unwrap(), probe);
}

#[test]
fn diff_examples() {
    let mut s = store();
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    let c = s.create_node(root, "Cable").unwrap();
    s.set_attribute(root, m, "energy", 10, d(1.0)).unwrap();
    s.set_attribute(root, c, "capacity", 10, d(100.0)).unwrap();
    assert!(s.diff_worlds(root, root, &DiffScope::default(), 50).unwrap().is_empty());
    let child = s.fork_world(root).unwrap();
    assert!(s.diff_worlds(root, child, &DiffScope::default(), 50).unwrap().is_empty());
    s.set_attribute(child, m, "energy", 20, d(2.0)).unwrap();
    let rows = s.diff_worlds(root, child, &DiffScope::default(), 50).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].node, rows[0].a.clone(), rows[0].b.clone()), (m, Some(d(1.0)), Some(d(2.0))));
    assert!(s.diff_worlds(root, child, &DiffScope::default(), 15).unwrap().is_empty());
    let only_cables = DiffScope {
        nodes: Some([c].into()),
        members: None,
    };
    assert!(s.diff_worlds(root, child, &only_cables, 50).unwrap().is_empty());
    let by_member = DiffScope {
        nodes: None,
        members: Some(["Meter.energy".to_string()].into()),
    };
    assert_eq!(s.diff_worlds(root, child, &by_member, 50).unwrap().len(), 1);
    // A node created in the fork diffs against NoValue.
    let n = s.create_node(child, "Meter").unwrap();
    s.set_attribute(child, n, "count", 30, l(3)).unwrap();
    let rows = s.diff_worlds(root, child, &DiffScope::default(), 50).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().any(|r| r.node == n && r.a.is_none() && r.b == Some(l(3))));
}

#[test]
fn randomized_diff_matches_full_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut s = store();
    let root = s.root();
    let meters: Vec<NodeId> = (0..6).map(|_| s.create_node(root, "Meter").unwrap()).collect();
    let cables: Vec<NodeId> = (0..3).map(|_| s.create_node(root, "Cable").unwrap()).collect();
    for (i, m) in meters.iter().enumerate() {
        s.set_attribute(root, *m, "energy", 10, d(i as f64)).unwrap();
        s.set_attribute(root, *m, "count", 10, l(i as i64)).unwrap();
    }
    let child = s.fork_world(root).unwrap();
    let mut t = 10;
    for _ in 0..50 {
        t += rng.random_range(1..20);
        let m = meters[rng.random_range(0..meters.len())];
        match rng.random_range(0..3) {
            0 => s.set_attribute(child, m, "energy", t, d(rng.random_range(0..3) as f64)).unwrap(),
            1 => s.set_attribute(child, m, "count", t, l(rng.random_range(0..3))).unwrap(),
            _ => {
                let c = cables[rng.random_range(0..cables.len())];
                s.set_attribute(child, c, "capacity", t, d(rng.random_range(0..2) as f64)).unwrap()
            }
        };
    }
    for probe in [5, 10, t / 2, t, t + 100] {
        let got = s.diff_worlds(root, child, &DiffScope::default(), probe).unwrap();
        let mut want = Vec::new();
        for n in s.nodes(root).unwrap() {
            let class = s.node_class(n).unwrap().to_string();
            let attrs: &[&str] = if class == "Meter" {
                &["energy", "count", "label", "on"]
            } else {
                &["capacity"]
            };
            for a in attrs {
                let x = s.get_attribute(root, n, a, probe).unwrap();
                let y = s.get_attribute(child, n, a, probe).unwrap();
                if x != y {
                    want.push((n, a.to_string(), x, y));
                }
            }
        }
        let got: Vec<_> = got
            .into_iter()
            .map(|r| (r.node, s.schema().member(r.member).name.clone(), r.a, r.b))
            .collect();
        assert_eq!(got, want, "probe {probe}");
    }
}

#[test]
fn persist_empty_store() {
    let dir = tempfile::tempdir().unwrap();
    let s = store();
    s.persist(dir.path()).unwrap();
    let o = Store::open(dir.path()).unwrap();
    assert_eq!(o.node_count(), 0);
    assert_eq!(o.nodes(o.root()).unwrap(), vec![]);
}

fn sample_store() -> (Store, NodeId, Vec<(i64, f64)>) {
    let mut cfg = StoreConfig::default();
    cfg.epsilon.insert("Meter.energy".into(), 0.05);
    let mut s = store_with(cfg);
    let root = s.root();
    let m = s.create_named_node(root, "Meter", "M").unwrap();
    let c = s.create_named_node(root, "Cable", "C").unwrap();
    s.add_relation(root, c, "meters", m, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut raw = Vec::new();
    for i in 0..10_000i64 {
        let t = i * 1000;
        let v = (i as f64 / 150.0).sin() * 10.0 + rng.random_range(-0.02..0.02);
        s.set_attribute(root, m, "energy", t, d(v)).unwrap();
        raw.push((t, v));
        if i % 100 == 0 {
            s.set_attribute(root, m, "count", t, l(i)).unwrap();
        }
    }
    let child = s.fork_world(root).unwrap();
    s.set_attribute(child, m, "energy", 10_000_000, d(1.0)).unwrap();
    s.set_attribute(root, m, "energy", 10_000_000, d(2.0)).unwrap();
    (s, m, raw)
}

#[test]
fn persist_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (s, m, raw) = sample_store();
    s.persist(dir.path()).unwrap();
    let o = Store::open(dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for w in [WorldId(0), WorldId(1)] {
        for _ in 0..100 {
            let t = rng.random_range(-1000..10_001_000);
            for a in ["energy", "count"] {
                assert_eq!(
                    s.get_attribute(w, m, a, t).unwrap(),
                    o.get_attribute(w, m, a, t).unwrap(),
                    "{w} {a} at {t}"
                );
            }
        }
    }
    assert_eq!(o.segment_count(), s.segment_count());
    assert_eq!(o.node_by_name(o.root(), "C").unwrap(), s.node_by_name(s.root(), "C").unwrap());
    assert_eq!(o.journal(), s.journal());
    assert_eq!(o.seq(), s.seq());
    assert!(raw.len() == 10_000);
    // Writing after reopening continues the same series.
    let mut o = o;
    o.set_attribute(o.root(), m, "energy", 10_001_000, d(3.0)).unwrap();
}

#[test]
fn truncated_log_names_the_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (s, _, _) = sample_store();
    s.persist(dir.path()).unwrap();
    let path = dir.path().join("graph.log");
    let bytes = std::fs::read(&path).unwrap();
    // Locate the start of the last record by walking the framing.
    let mut pos = 12usize;
    let mut last = pos;
    while pos < bytes.len() {
        last = pos;
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        pos += len + 8;
    }
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    match Store::open(dir.path()) {
        Err(GraphError::Corrupt { offset, ref reason, .. }) => {
            assert_eq!(offset, last as u64);
            assert!(reason.contains("truncated"), "{reason}");
            let msg = Store::open(dir.path()).unwrap_err().to_string();
            assert!(msg.contains(&format!("byte {last}")), "{msg}");
        }
        other => panic!("expected corruption error, got {other:?}"),
    }

    let mut flipped = bytes.clone();
    flipped[last + 6] ^= 0x40;
    std::fs::write(&path, &flipped).unwrap();
    match Store::open(dir.path()) {
        Err(GraphError::Corrupt { offset, reason, .. }) => {
            assert_eq!(offset, last as u64);
            assert!(reason.contains("checksum"), "{reason}");
        }
        other => panic!("expected checksum error, got {other:?}"),
    }

    let seg = dir.path().join("segments.log");
    let mut sb = std::fs::read(&seg).unwrap();
    std::fs::write(&path, &bytes).unwrap();
    sb[8] = 99;
    std::fs::write(&seg, &sb).unwrap();
    assert!(matches!(Store::open(dir.path()), Err(GraphError::Version { found: 99, .. })));
}

#[test]
fn persist_does_not_change_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let (s, m, _) = sample_store();
    let before = format!("{:?}", s.chain(s.root(), m, s.member_of(m, "energy").unwrap()));
    s.persist(dir.path()).unwrap();
    let after = format!("{:?}", s.chain(s.root(), m, s.member_of(m, "energy").unwrap()));
    assert_eq!(before, after);
    // Persisting twice gives identical bytes.
    let again = tempfile::tempdir().unwrap();
    s.persist(again.path()).unwrap();
    for f in ["graph.log", "segments.log", "profiles.log", "model.mdm"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seal_closes_open_points() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = store();
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    let energy = s.member_of(m, "energy").unwrap();
    for i in 0..1000i64 {
        s.set_attribute(root, m, "energy", i * 10, d(4.5)).unwrap();
    }
    assert!(!s.chain(root, m, energy).unwrap().encoder().is_empty());
    let receipts = s.seal(root).unwrap();
    assert_eq!(receipts.len(), 1);
    let r = &receipts[0];
    assert_eq!((r.node, r.member, r.kind), (m, energy, WriteKind::Reshape));
    assert_eq!(r.reshaped, Some((0, i64::MAX)));
    let c = s.chain(root, m, energy).unwrap();
    assert_eq!(c.encoder().len(), 0);
    assert_eq!(c.segments().len(), 1);
    for t in [0, 5, 9990, 20_000] {
        assert_eq!(s.get_attribute(root, m, "energy", t).unwrap(), Some(d(4.5)));
    }
    assert_eq!(s.get_attribute(root, m, "energy", -1).unwrap(), None);
    // Nothing left to close.
    assert!(s.seal(root).unwrap().is_empty());

    s.persist(dir.path()).unwrap();
    let o = Store::open(dir.path()).unwrap();
    assert_eq!(o.journal(), s.journal());
    assert_eq!(o.get_attribute(root, m, "energy", 9995).unwrap(), Some(d(4.5)));
}

#[test]
fn seal_freezes_points_a_fork_can_see() {
    let mut s = store_with(StoreConfig {
        default_epsilon: 1.0,
        ..StoreConfig::default()
    });
    let root = s.root();
    let m = s.create_node(root, "Meter").unwrap();
    let energy = s.member_of(m, "energy").unwrap();
    let vals = [1.0, 1.0, 1.2, 3.0, 3.0];
    for (i, v) in vals.iter().enumerate() {
        s.set_attribute(root, m, "energy", i as i64 * 10, d(*v)).unwrap();
    }
    let child = s.fork_world(root).unwrap();
    let seq = s.seq();
    assert!(s.seal(root).unwrap().is_empty());
    assert_eq!(s.seq(), seq);
    let c = s.chain(root, m, energy).unwrap();
    assert_eq!(c.encoder().len(), 0);
    // One exact segment per run of equal values.
    assert_eq!(c.segments().len(), 3);
    for t in 0..60 {
        let want = Some(d(vals[(t / 10).min(4) as usize]));
        assert_eq!(s.get_attribute(root, m, "energy", t).unwrap(), want, "root {t}");
        assert_eq!(s.get_attribute(child, m, "energy", t).unwrap(), want, "child {t}");
    }
}

// ---- properties ----

#[derive(Debug, Clone)]
enum Op {
    Fork(usize),
    Long(usize, usize, i64, i64),
    Double(usize, usize, i64, i64),
    Link(usize, usize, usize, i64),
    Create(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        1 => (0usize..8).prop_map(Op::Fork),
        4 => (0usize..8, 0usize..8, 1i64..30, -5i64..5).prop_map(|(w, n, dt, v)| Op::Long(w, n, dt, v)),
        4 => (0usize..8, 0usize..8, 1i64..30, -5i64..5).prop_map(|(w, n, dt, v)| Op::Double(w, n, dt, v)),
        2 => (0usize..8, 0usize..4, 0usize..8, 0i64..30).prop_map(|(w, c, m, dt)| Op::Link(w, c, m, dt)),
        1 => (0usize..8).prop_map(Op::Create),
    ]
}

/// Flattened reference: every world sees its parent's events up to the
/// fork's sequence number, plus its own.
#[derive(Default)]
struct Oracle {
    worlds: Vec<(Option<usize>, u64)>,
    /// `(world, seq, node, attr, t, value)`.
    writes: Vec<(usize, u64, NodeId, &'static str, i64, Value)>,
    /// `(world, seq, cable, meter, t, add)`.
    links: Vec<(usize, u64, NodeId, NodeId, i64, bool)>,
    /// `(world, seq, node)`.
    nodes: Vec<(usize, u64, NodeId)>,
}

impl Oracle {
    fn bounds(&self, w: usize) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        let (mut cur, mut bound) = (Some(w), u64::MAX);
        while let Some(c) = cur {
            out.insert(c, bound);
            let (p, f) = self.worlds[c];
            bound = bound.min(f);
            cur = p;
        }
        out
    }

    fn visible_writes(&self, w: usize, n: NodeId, a: &str) -> Vec<(i64, Value)> {
        let b = self.bounds(w);
        let mut v: Vec<(i64, Value)> = self
            .writes
            .iter()
            .filter(|x| x.2 == n && x.3 == a && b.get(&x.0).is_some_and(|bd| x.1 <= *bd))
            .map(|x| (x.4, x.5.clone()))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    }

    fn read(&self, w: usize, n: NodeId, a: &str, t: i64) -> Option<Value> {
        self.visible_writes(w, n, a)
            .into_iter()
            .rfind(|x| x.0 <= t)
            .map(|x| x.1)
    }

    fn members(&self, w: usize, c: NodeId, t: i64) -> Vec<NodeId> {
        let b = self.bounds(w);
        let mut evs: Vec<_> = self
            .links
            .iter()
            .filter(|x| x.2 == c && b.get(&x.0).is_some_and(|bd| x.1 <= *bd))
            .collect();
        evs.sort_by_key(|x| (x.4, x.1));
        let mut set = BTreeSet::new();
        for e in evs.into_iter().filter(|e| e.4 <= t) {
            if e.5 {
                set.insert(e.3);
            } else {
                set.remove(&e.3);
            }
        }
        set.into_iter().collect()
    }

    fn visible_nodes(&self, w: usize) -> Vec<NodeId> {
        let b = self.bounds(w);
        self.nodes
            .iter()
            .filter(|x| b.get(&x.0).is_some_and(|bd| x.1 <= *bd))
            .map(|x| x.2)
            .collect()
    }
}

fn run_ops(ops: &[Op]) -> Result<(), TestCaseError> {
    let mut s = store();
    let mut o = Oracle::default();
    o.worlds.push((None, 0));
    let worlds = |o: &Oracle, i: usize| i % o.worlds.len();
    let mut meters = Vec::new();
    let mut cables = Vec::new();
    for i in 0..4 {
        let m = s.create_node(WorldId(0), "Meter").unwrap();
        o.nodes.push((0, s.seq(), m));
        meters.push(m);
        if i < 2 {
            let c = s.create_node(WorldId(0), "Cable").unwrap();
            o.nodes.push((0, s.seq(), c));
            cables.push(c);
        }
    }
    for op in ops {
        match *op {
            Op::Fork(p) => {
                let p = worlds(&o, p);
                let w = s.fork_world(WorldId(p as u64)).unwrap();
                prop_assert_eq!(w.0 as usize, o.worlds.len());
                o.worlds.push((Some(p), s.seq()));
            }
            Op::Create(w) => {
                let w = worlds(&o, w);
                let m = s.create_node(WorldId(w as u64), "Meter").unwrap();
                o.nodes.push((w, s.seq(), m));
                meters.push(m);
            }
            Op::Long(w, n, dt, v) | Op::Double(w, n, dt, v) => {
                let w = worlds(&o, w);
                let n = meters[n % meters.len()];
                if !o.visible_nodes(w).contains(&n) {
                    continue;
                }
                let (attr, value) = match op {
                    Op::Long(..) => ("count", l(v)),
                    _ => ("energy", d(v as f64 * 0.5)),
                };
                let last = o.visible_writes(w, n, attr).last().map(|x| x.0).unwrap_or(0);
                let t = last + dt;
                let r = s.set_attribute(WorldId(w as u64), n, attr, t, value.clone()).unwrap();
                o.writes.push((w, r.seq, n, attr, t, value));
            }
            Op::Link(w, c, m, dt) => {
                let w = worlds(&o, w);
                let c = cables[c % cables.len()];
                let m = meters[m % meters.len()];
                if !o.visible_nodes(w).contains(&m) {
                    continue;
                }
                let b = o.bounds(w);
                let last = o
                    .links
                    .iter()
                    .filter(|x| x.2 == c && b.get(&x.0).is_some_and(|bd| x.1 <= *bd))
                    .map(|x| x.4)
                    .max()
                    .unwrap_or(0);
                let t = last + dt;
                let present = o.members(w, c, t).contains(&m);
                let r = if present {
                    s.remove_relation(WorldId(w as u64), c, "meters", m, t)
                } else {
                    s.add_relation(WorldId(w as u64), c, "meters", m, t)
                }
                .unwrap();
                o.links.push((w, r.seq, c, m, t, !present));
            }
        }
    }
    for w in 0..o.worlds.len() {
        let wid = WorldId(w as u64);
        let visible = o.visible_nodes(w);
        prop_assert_eq!(s.nodes(wid).unwrap().into_iter().filter(|n| meters.contains(n) || cables.contains(n)).collect::<Vec<_>>(), {
            let mut v = visible.clone();
            v.sort();
            v
        });
        for &n in &meters {
            if !visible.contains(&n) {
                continue;
            }
            for t in -1..=400 {
                prop_assert_eq!(s.get_attribute(wid, n, "count", t).unwrap(), o.read(w, n, "count", t), "count {} {} {}", w, n, t);
            }
            // Doubles are exact at sample times with the default epsilon of zero.
            let ws = o.visible_writes(w, n, "energy");
            for (t, v) in &ws {
                prop_assert_eq!(s.get_attribute(wid, n, "energy", *t).unwrap(), Some(v.clone()));
            }
            if let (Some(first), Some(last)) = (ws.first(), ws.last()) {
                prop_assert_eq!(s.get_attribute(wid, n, "energy", first.0 - 1).unwrap(), None);
                prop_assert_eq!(s.get_attribute(wid, n, "energy", last.0 + 1000).unwrap(), Some(last.1.clone()));
            }
        }
        for &c in &cables {
            for t in -1..=400 {
                prop_assert_eq!(s.get_relations(wid, c, "meters", t).unwrap(), o.members(w, c, t));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// Covers fork isolation (writes after a fork stay on their side) and
    /// chain resolution (reads through fork chains equal a flattened copy).
    #[test]
    fn worlds_match_flattened_history(ops in prop::collection::vec(op(), 1..80)) {
        run_ops(&ops)?;
    }

    #[test]
    fn latest_at_or_before(
        gaps in prop::collection::vec(1i64..50, 1..60),
        vals in prop::collection::vec(-100i64..100, 60),
        probes in prop::collection::vec(-10i64..3000, 1..40),
    ) {
        let mut s = store();
        let root = s.root();
        let m = s.create_node(root, "Meter").unwrap();
        let mut reference: Vec<(i64, i64)> = Vec::new();
        let mut t = 0;
        for (g, v) in gaps.iter().zip(&vals) {
            t += g;
            s.set_attribute(root, m, "count", t, l(*v)).unwrap();
            s.set_attribute(root, m, "label", t, Value::Str(v.to_string())).unwrap();
            reference.push((t, *v));
        }
        for p in probes {
            let want = reference.iter().rev().find(|(rt, _)| *rt <= p).map(|x| x.1);
            prop_assert_eq!(s.get_attribute(root, m, "count", p).unwrap(), want.map(l));
            prop_assert_eq!(s.get_attribute(root, m, "label", p).unwrap(), want.map(|v| Value::Str(v.to_string())));
        }
    }

    #[test]
    fn durable_round_trip(ops in prop::collection::vec(op(), 1..60), seed in any::<u64>()) {
        let mut s = store();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let root = s.root();
        let ms: Vec<NodeId> = (0..3).map(|_| s.create_node(root, "Meter").unwrap()).collect();
        let c = s.create_node(root, "Cable").unwrap();
        let mut worlds = vec![root];
        let mut last: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for op in &ops {
            match *op {
                Op::Fork(p) => worlds.push(s.fork_world(worlds[p % worlds.len()]).unwrap()),
                Op::Double(w, n, dt, v) | Op::Long(w, n, dt, v) => {
                    let wi = w % worlds.len();
                    let n = n % ms.len();
                    // Successive timestamps grow across all worlds, so every
                    // append is after anything a world can inherit.
                    let t = last.values().max().copied().unwrap_or(0) + dt;
                    last.insert((wi, n), t);
                    s.set_attribute(worlds[wi], ms[n], "energy", t, d(v as f64 + rng.random_range(0.0..1.0))).unwrap();
                }
                Op::Link(w, _, m, dt) => {
                    let wi = w % worlds.len();
                    let t = last.values().max().copied().unwrap_or(0) + dt;
                    last.insert((wi, 99), t);
                    let m = ms[m % ms.len()];
                    let _ = s.add_relation(worlds[wi], c, "meters", m, t);
                }
                Op::Create(w) => {
                    s.create_node(worlds[w % worlds.len()], "Meter").unwrap();
                }
            }
        }
        let dir = tempfile::tempdir().unwrap();
        s.persist(dir.path()).unwrap();
        let o = Store::open(dir.path()).unwrap();
        let horizon = last.values().max().copied().unwrap_or(0) + 5;
        for w in &worlds {
            prop_assert_eq!(s.nodes(*w).unwrap(), o.nodes(*w).unwrap());
            for n in s.nodes(*w).unwrap() {
                for t in (-1..horizon).step_by(3) {
                    if s.node_class(n).unwrap() == "Meter" {
                        prop_assert_eq!(s.get_attribute(*w, n, "energy", t).unwrap(), o.get_attribute(*w, n, "energy", t).unwrap());
                    } else {
                        prop_assert_eq!(s.get_relations(*w, n, "meters", t).unwrap(), o.get_relations(*w, n, "meters", t).unwrap());
                    }
                }
            }
        }
    }
}
