// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Store directory snapshots. Record layouts are described in
//! `docs/format.md`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::world::{OutputMap, PlainPoint, RelEvent, Referrer, Versioned, WorldData};
use super::{GraphError, NodeId, NodeMeta, Result, Store, StoreConfig, Value, WorldId, WriteKind, WriteReceipt};
use crate::poly::{EncoderState, Segment, SegmentChain};
use crate::profiler::MixtureProfile;
use crate::schema::{ClassId, MemberId, Schema};

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.mdm";
pub const GRAPH_FILE: &str = "graph.log";
pub const SEGMENTS_FILE: &str = "segments.log";
pub const PROFILES_FILE: &str = "profiles.log";

const GRAPH_MAGIC: &[u8; 8] = b"MDAGRAPH";
const SEGMENTS_MAGIC: &[u8; 8] = b"MDASEGMT";
const PROFILES_MAGIC: &[u8; 8] = b"MDAPROFL";

const TAG_HEADER: u8 = 1;
const TAG_WORLD: u8 = 2;
const TAG_NODE: u8 = 3;
const TAG_PLAIN: u8 = 4;
const TAG_RELATION: u8 = 5;
const TAG_REFERRERS: u8 = 6;
const TAG_OUTPUT: u8 = 7;
const TAG_CHAIN: u8 = 8;
const TAG_JOURNAL: u8 = 9;

const VALUE_FAILED: u8 = 255;

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) -> &mut Self {
        self.0.push(v);
        self
    }
    fn u16(&mut self, v: u16) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    fn u32(&mut self, v: u32) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    fn u64(&mut self, v: u64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    fn i64(&mut self, v: i64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    fn f64(&mut self, v: f64) -> &mut Self {
        self.0.extend_from_slice(&v.to_le_bytes());
        self
    }
    fn str(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
        self
    }
    fn value(&mut self, v: Option<&Value>) -> &mut Self {
        match v {
            None => self.u8(VALUE_FAILED),
            Some(Value::Double(x)) => self.u8(0).f64(*x),
            Some(Value::Long(x)) => self.u8(1).i64(*x),
            Some(Value::Bool(x)) => self.u8(2).u8(*x as u8),
            Some(Value::Str(s)) => self.u8(3).str(s),
        }
    }
    fn receipt(&mut self, r: &WriteReceipt) -> &mut Self {
        self.u64(r.seq).u64(r.world.0).u64(r.node.0).u32(r.member.0).i64(r.t);
        match r.kind {
            WriteKind::Attr => self.u8(0).u64(0),
            WriteKind::RelAdd(x) => self.u8(1).u64(x.0),
            WriteKind::RelRemove(x) => self.u8(2).u64(x.0),
            WriteKind::Reshape => self.u8(3).u64(0),
        };
        match r.reshaped {
            Some((a, b)) => self.u8(1).i64(a).i64(b),
            None => self.u8(0),
        }
    }
}

struct Dec<'a> {
    b: &'a [u8],
    pos: usize,
}

type DecResult<T> = std::result::Result<T, String>;

impl<'a> Dec<'a> {
    fn new(b: &'a [u8]) -> Self {
        Dec { b, pos: 0 }
    }
    fn take(&mut self, n: usize) -> DecResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.b.len());
        let end = end.ok_or_else(|| format!("payload ends inside a field at payload byte {}", self.pos))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn arr<const N: usize>(&mut self) -> DecResult<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length"))
    }
    fn u8(&mut self) -> DecResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> DecResult<u16> {
        self.arr().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> DecResult<u32> {
        self.arr().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> DecResult<u64> {
        self.arr().map(u64::from_le_bytes)
    }
    fn i64(&mut self) -> DecResult<i64> {
        self.arr().map(i64::from_le_bytes)
    }
    fn f64(&mut self) -> DecResult<f64> {
        self.arr().map(f64::from_le_bytes)
    }
    fn len(&mut self) -> DecResult<usize> {
        Ok(self.u32()? as usize)
    }
    fn str(&mut self) -> DecResult<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "invalid UTF-8 string".to_string())
    }
    fn value(&mut self) -> DecResult<Option<Value>> {
        Ok(Some(match self.u8()? {
            VALUE_FAILED => return Ok(None),
            0 => Value::Double(self.f64()?),
            1 => Value::Long(self.i64()?),
            2 => Value::Bool(self.u8()? != 0),
            3 => Value::Str(self.str()?),
            t => return Err(format!("unknown value tag {t}")),
        }))
    }
    fn receipt(&mut self) -> DecResult<WriteReceipt> {
        let seq = self.u64()?;
        let world = WorldId(self.u64()?);
        let node = NodeId(self.u64()?);
        let member = MemberId(self.u32()?);
        let t = self.i64()?;
        let tag = self.u8()?;
        let target = NodeId(self.u64()?);
        let kind = match tag {
            0 => WriteKind::Attr,
            1 => WriteKind::RelAdd(target),
            2 => WriteKind::RelRemove(target),
            3 => WriteKind::Reshape,
            k => return Err(format!("unknown write kind {k}")),
        };
        let reshaped = match self.u8()? {
            0 => None,
            _ => Some((self.i64()?, self.i64()?)),
        };
        Ok(WriteReceipt {
            seq,
            world,
            node,
            member,
            t,
            kind,
            reshaped,
        })
    }
    fn done(&self) -> DecResult<()> {
        if self.pos == self.b.len() {
            Ok(())
        } else {
            Err(format!("{} unexpected trailing payload bytes", self.b.len() - self.pos))
        }
    }
}

/// A log file under construction: header, then framed records.
struct LogWriter(Vec<u8>);

impl LogWriter {
    fn new(magic: &[u8; 8]) -> Self {
        let mut b = magic.to_vec();
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        LogWriter(b)
    }
    fn record(&mut self, payload: &[u8]) {
        self.0.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        self.0.extend_from_slice(payload);
        self.0.extend_from_slice(&crc32c::crc32c(payload).to_le_bytes());
    }
}

/// Splits a log into `(offset, payload)` records, checking the header and
/// every checksum.
fn read_log<'a>(file: &str, bytes: &'a [u8], magic: &[u8; 8]) -> Result<Vec<(u64, &'a [u8])>> {
    let corrupt = |offset: usize, reason: &str| GraphError::Corrupt {
        file: file.to_string(),
        offset: offset as u64,
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(corrupt(0, "missing or wrong file header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("length"));
    if version != FORMAT_VERSION {
        return Err(GraphError::Version {
            file: file.to_string(),
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut out = Vec::new();
    let mut pos = 12;
    while pos < bytes.len() {
        if bytes.len() - pos < 4 {
            return Err(corrupt(pos, "truncated record length"));
        }
        let len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().expect("length")) as usize;
        let end = pos + 4 + len + 4;
        if end > bytes.len() {
            return Err(corrupt(pos, "truncated record"));
        }
        let payload = &bytes[pos + 4..pos + 4 + len];
        let crc = u32::from_le_bytes(bytes[pos + 4 + len..end].try_into().expect("length"));
        if crc != crc32c::crc32c(payload) {
            return Err(corrupt(pos, "checksum mismatch"));
        }
        out.push((pos as u64, payload));
        pos = end;
    }
    Ok(out)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GraphError + '_ {
    move |error| GraphError::Io {
        path: path.display().to_string(),
        error,
    }
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    let path = dir.join(name);
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &path).map_err(io_err(&path))
}

impl Store {
    /// Writes a full snapshot of the store into `dir`. The store itself is
    /// not modified; open buffers are saved raw.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut graph = LogWriter::new(GRAPH_MAGIC);
        let mut segments = LogWriter::new(SEGMENTS_MAGIC);
        let mut profiles = LogWriter::new(PROFILES_MAGIC);

        let config = serde_json::to_string(&self.config).expect("config serializes");
        let mut e = Enc::default();
        e.u8(TAG_HEADER)
            .u64(self.seq)
            .str(&config)
            .u64(self.worlds.len() as u64)
            .u64(self.nodes.len() as u64);
        graph.record(&e.0);

        for (i, wd) in self.worlds.iter().enumerate() {
            let w = i as u64;
            let mut e = Enc::default();
            e.u8(TAG_WORLD).u64(w);
            match wd.parent {
                Some(p) => e.u8(1).u64(p.0),
                None => e.u8(0).u64(0),
            };
            e.u64(wd.fork_seq).u64(wd.max_fork_seq);
            e.u32(wd.inherit.versions().len() as u32);
            for (s, v) in wd.inherit.versions() {
                e.u64(*s).u8(*v as u8);
            }
            e.u64(wd.refined_upto);
            graph.record(&e.0);
        }

        for (i, n) in self.nodes.iter().enumerate() {
            let mut e = Enc::default();
            e.u8(TAG_NODE).u64(i as u64).u32(n.class.0).u64(n.world.0).u64(n.seq);
            match &n.name {
                Some(s) => e.u8(1).str(s),
                None => e.u8(0),
            };
            graph.record(&e.0);
        }

        for (i, wd) in self.worlds.iter().enumerate() {
            let w = i as u64;
            for ((n, m), points) in &wd.plains {
                let mut e = Enc::default();
                e.u8(TAG_PLAIN).u64(w).u64(n.0).u32(m.0).u32(points.len() as u32);
                for p in points {
                    e.i64(p.t).u64(p.seq).value(Some(&p.value));
                }
                graph.record(&e.0);
            }
            for ((n, m), events) in &wd.rels {
                let mut e = Enc::default();
                e.u8(TAG_RELATION).u64(w).u64(n.0).u32(m.0).u32(events.len() as u32);
                for ev in events {
                    e.i64(ev.t).u64(ev.seq).u64(ev.target.0).u8(ev.add as u8);
                }
                graph.record(&e.0);
            }
            for (target, refs) in &wd.referrers {
                let mut e = Enc::default();
                e.u8(TAG_REFERRERS).u64(w).u64(target.0).u32(refs.len() as u32);
                for r in refs {
                    e.u64(r.node.0).u32(r.rel.0).u64(r.seq);
                }
                graph.record(&e.0);
            }
            for ((n, m), versions) in &wd.outputs {
                let mut e = Enc::default();
                e.u8(TAG_OUTPUT).u64(w).u64(n.0).u32(m.0).u32(versions.versions().len() as u32);
                for (s, map) in versions.versions() {
                    e.u64(*s).u32(map.len() as u32);
                    for (t, v) in map {
                        e.i64(*t).value(v.as_ref());
                    }
                }
                graph.record(&e.0);
            }
            for ((n, m), chain) in &wd.chains {
                let mut e = Enc::default();
                let st = chain.encoder().state();
                e.u8(TAG_CHAIN)
                    .u64(w)
                    .u64(n.0)
                    .u32(m.0)
                    .f64(chain.epsilon())
                    .u32(chain.encoder().max_degree() as u32)
                    .u64(chain.raw_points())
                    .u32(chain.segments().len() as u32);
                for (s, seg) in chain.segment_seqs().iter().zip(chain.segments()) {
                    e.u64(*s).u32(seg.len);
                }
                e.u64(st.verified as u64).f64(st.span).u32(st.coeffs.len() as u32);
                for c in &st.coeffs {
                    e.f64(*c);
                }
                e.u32(st.ts.len() as u32);
                for ((t, v), s) in st.ts.iter().zip(&st.vs).zip(chain.open_seqs()) {
                    e.i64(*t).f64(*v).u64(*s);
                }
                graph.record(&e.0);
                for seg in chain.segments() {
                    let mut e = Enc::default();
                    e.u64(w)
                        .u64(n.0)
                        .u32(m.0)
                        .i64(seg.start)
                        .i64(seg.end)
                        .u16(seg.degree() as u16)
                        .f64(seg.epsilon);
                    for c in &seg.coeffs {
                        e.f64(*c);
                    }
                    segments.record(&e.0);
                }
            }
            for (n, versions) in &wd.profiles {
                let mut e = Enc::default();
                e.u64(w).u64(n.0).u32(versions.versions().len() as u32);
                for (s, p) in versions.versions() {
                    e.u64(*s);
                    match p {
                        Some(p) => {
                            e.u8(1);
                            p.encode(&mut e.0);
                        }
                        None => {
                            e.u8(0);
                        }
                    }
                }
                profiles.record(&e.0);
            }
        }

        for r in &self.journal {
            let mut e = Enc::default();
            e.u8(TAG_JOURNAL).receipt(r);
            graph.record(&e.0);
        }

        write_atomic(dir, SEGMENTS_FILE, &segments.0)?;
        write_atomic(dir, PROFILES_FILE, &profiles.0)?;
        write_atomic(dir, MODEL_FILE, self.schema.text().as_bytes())?;
        // The graph log goes last: it names the chains the other logs fill.
        write_atomic(dir, GRAPH_FILE, &graph.0)
    }

    /// Loads a snapshot written by [`Store::persist`].
    pub fn open(dir: impl AsRef<Path>) -> Result<Store> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            let p = dir.join(name);
            fs::read(&p).map_err(io_err(&p))
        };
        let model_text = String::from_utf8(read(MODEL_FILE)?)
            .map_err(|_| GraphError::Model(format!("{MODEL_FILE} is not UTF-8")))?;
        let schema = Schema::parse(&model_text).map_err(|d| {
            GraphError::Model(d.iter().map(|x| x.render(MODEL_FILE)).collect::<Vec<_>>().join("\n"))
        })?;
        let graph_bytes = read(GRAPH_FILE)?;
        let seg_bytes = read(SEGMENTS_FILE)?;
        let prof_bytes = read(PROFILES_FILE)?;
        let mut loader = Loader::default();
        let graph_path = dir.join(GRAPH_FILE).display().to_string();
        for (off, payload) in read_log(&graph_path, &graph_bytes, GRAPH_MAGIC)? {
            loader.graph_record(payload).map_err(|reason| GraphError::Corrupt {
                file: graph_path.clone(),
                offset: off,
                reason,
            })?;
        }
        let seg_path = dir.join(SEGMENTS_FILE).display().to_string();
        for (off, payload) in read_log(&seg_path, &seg_bytes, SEGMENTS_MAGIC)? {
            loader.segment_record(payload).map_err(|reason| GraphError::Corrupt {
                file: seg_path.clone(),
                offset: off,
                reason,
            })?;
        }
        let prof_path = dir.join(PROFILES_FILE).display().to_string();
        for (off, payload) in read_log(&prof_path, &prof_bytes, PROFILES_MAGIC)? {
            loader.profile_record(payload).map_err(|reason| GraphError::Corrupt {
                file: prof_path.clone(),
                offset: off,
                reason,
            })?;
        }
        loader.finish(schema, &graph_path)
    }
}

struct ChainMeta {
    epsilon: f64,
    max_degree: usize,
    raw_points: u64,
    seg_meta: Vec<(u64, u32)>,
    state: EncoderState,
    open_seq: Vec<u64>,
}

#[derive(Default)]
struct Loader {
    header: Option<(u64, StoreConfig, u64, u64)>,
    worlds: Vec<WorldData>,
    nodes: Vec<NodeMeta>,
    chains: BTreeMap<(u64, NodeId, MemberId), ChainMeta>,
    segments: BTreeMap<(u64, NodeId, MemberId), Vec<Segment>>,
    profiles: Vec<(u64, NodeId, Versioned<Option<MixtureProfile>>)>,
    journal: Vec<WriteReceipt>,
}

impl Loader {
    fn world(&mut self, w: u64) -> DecResult<&mut WorldData> {
        self.worlds
            .get_mut(w as usize)
            .ok_or_else(|| format!("record names unknown world {w}"))
    }

    fn graph_record(&mut self, payload: &[u8]) -> DecResult<()> {
        let mut d = Dec::new(payload);
        match d.u8()? {
            TAG_HEADER => {
                let seq = d.u64()?;
                let cfg: StoreConfig =
                    serde_json::from_str(&d.str()?).map_err(|e| format!("bad configuration: {e}"))?;
                self.header = Some((seq, cfg, d.u64()?, d.u64()?));
            }
            TAG_WORLD => {
                let id = d.u64()?;
                if id != self.worlds.len() as u64 {
                    return Err(format!("world {id} out of order"));
                }
                let parent = match d.u8()? {
                    0 => {
                        d.u64()?;
                        None
                    }
                    _ => Some(WorldId(d.u64()?)),
                };
                let mut wd = WorldData::new(parent, d.u64()?);
                wd.max_fork_seq = d.u64()?;
                let n = d.len()?;
                let mut versions = Vec::with_capacity(n.min(1024));
                for _ in 0..n {
                    versions.push((d.u64()?, d.u8()? != 0));
                }
                if versions.is_empty() {
                    return Err("world without inheritance state".into());
                }
                wd.inherit = Versioned::from_versions(versions);
                wd.refined_upto = d.u64()?;
                self.worlds.push(wd);
            }
            TAG_NODE => {
                let id = d.u64()?;
                if id != self.nodes.len() as u64 {
                    return Err(format!("node {id} out of order"));
                }
                let class = ClassId(d.u32()?);
                let world = WorldId(d.u64()?);
                let seq = d.u64()?;
                let name = match d.u8()? {
                    0 => None,
                    _ => Some(d.str()?),
                };
                if let Some(n) = &name {
                    self.world(world.0)?.names.insert(n.clone(), NodeId(id));
                }
                self.nodes.push(NodeMeta {
                    class,
                    world,
                    seq,
                    name,
                });
            }
            TAG_PLAIN => {
                let (w, n, m) = (d.u64()?, NodeId(d.u64()?), MemberId(d.u32()?));
                let count = d.len()?;
                let mut pts = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    let t = d.i64()?;
                    let seq = d.u64()?;
                    let value = d.value()?.ok_or("failed marker in raw data")?;
                    pts.push(PlainPoint { t, seq, value });
                }
                self.world(w)?.plains.insert((n, m), pts);
            }
            TAG_RELATION => {
                let (w, n, m) = (d.u64()?, NodeId(d.u64()?), MemberId(d.u32()?));
                let count = d.len()?;
                let mut evs = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    evs.push(RelEvent {
                        t: d.i64()?,
                        seq: d.u64()?,
                        target: NodeId(d.u64()?),
                        add: d.u8()? != 0,
                    });
                }
                self.world(w)?.rels.insert((n, m), evs);
            }
            TAG_REFERRERS => {
                let (w, target) = (d.u64()?, NodeId(d.u64()?));
                let count = d.len()?;
                let mut refs = Vec::with_capacity(count.min(1 << 16));
                for _ in 0..count {
                    refs.push(Referrer {
                        node: NodeId(d.u64()?),
                        rel: MemberId(d.u32()?),
                        seq: d.u64()?,
                    });
                }
                self.world(w)?.referrers.insert(target, refs);
            }
            TAG_OUTPUT => {
                let (w, n, m) = (d.u64()?, NodeId(d.u64()?), MemberId(d.u32()?));
                let nv = d.len()?;
                let mut versions = Vec::with_capacity(nv.min(1024));
                for _ in 0..nv {
                    let s = d.u64()?;
                    let count = d.len()?;
                    let mut map = OutputMap::new();
                    for _ in 0..count {
                        let t = d.i64()?;
                        map.insert(t, d.value()?);
                    }
                    versions.push((s, map));
                }
                if versions.is_empty() {
                    return Err("output without versions".into());
                }
                self.world(w)?.outputs.insert((n, m), Versioned::from_versions(versions));
            }
            TAG_CHAIN => {
                let key = (d.u64()?, NodeId(d.u64()?), MemberId(d.u32()?));
                let epsilon = d.f64()?;
                let max_degree = d.u32()? as usize;
                let raw_points = d.u64()?;
                let nseg = d.len()?;
                let mut seg_meta = Vec::with_capacity(nseg.min(1 << 16));
                for _ in 0..nseg {
                    seg_meta.push((d.u64()?, d.u32()?));
                }
                let verified = d.u64()? as usize;
                let span = d.f64()?;
                let nc = d.len()?;
                let mut coeffs = Vec::with_capacity(nc.min(64));
                for _ in 0..nc {
                    coeffs.push(d.f64()?);
                }
                let no = d.len()?;
                let (mut ts, mut vs, mut open_seq) = (Vec::new(), Vec::new(), Vec::new());
                for _ in 0..no {
                    ts.push(d.i64()?);
                    vs.push(d.f64()?);
                    open_seq.push(d.u64()?);
                }
                if !(epsilon.is_finite() && epsilon >= 0.0) {
                    return Err(format!("invalid epsilon {epsilon}"));
                }
                self.world(key.0)?;
                self.chains.insert(
                    key,
                    ChainMeta {
                        epsilon,
                        max_degree,
                        raw_points,
                        seg_meta,
                        state: EncoderState {
                            ts,
                            vs,
                            verified,
                            coeffs,
                            span,
                        },
                        open_seq,
                    },
                );
            }
            TAG_JOURNAL => self.journal.push(d.receipt()?),
            t => return Err(format!("unknown record tag {t}")),
        }
        d.done()
    }

    fn segment_record(&mut self, payload: &[u8]) -> DecResult<()> {
        let mut d = Dec::new(payload);
        let key = (d.u64()?, NodeId(d.u64()?), MemberId(d.u32()?));
        let start = d.i64()?;
        let end = d.i64()?;
        let degree = d.u16()? as usize;
        let epsilon = d.f64()?;
        let mut coeffs = Vec::with_capacity(degree + 1);
        for _ in 0..=degree {
            coeffs.push(d.f64()?);
        }
        d.done()?;
        if start > end {
            return Err(format!("segment starts at {start} after its end {end}"));
        }
        self.segments.entry(key).or_default().push(Segment {
            start,
            end,
            coeffs,
            epsilon,
            len: 0,
        });
        Ok(())
    }

    fn profile_record(&mut self, payload: &[u8]) -> DecResult<()> {
        let mut d = Dec::new(payload);
        let w = d.u64()?;
        let n = NodeId(d.u64()?);
        let nv = d.len()?;
        let mut versions = Vec::with_capacity(nv.min(1024));
        for _ in 0..nv {
            let s = d.u64()?;
            let p = match d.u8()? {
                0 => None,
                _ => {
                    let (p, used) = MixtureProfile::decode(&d.b[d.pos..]).map_err(|e| e.to_string())?;
                    d.pos += used;
                    Some(p)
                }
            };
            versions.push((s, p));
        }
        d.done()?;
        if versions.is_empty() {
            return Err("profile without versions".into());
        }
        self.profiles.push((w, n, Versioned::from_versions(versions)));
        Ok(())
    }

    fn finish(mut self, schema: Schema, graph_path: &str) -> Result<Store> {
        let bad = |reason: String| GraphError::Corrupt {
            file: graph_path.to_string(),
            offset: 0,
            reason,
        };
        let (seq, config, nworlds, nnodes) = self.header.take().ok_or_else(|| bad("missing header record".into()))?;
        if self.worlds.len() as u64 != nworlds || self.nodes.len() as u64 != nnodes {
            return Err(bad(format!(
                "header announces {nworlds} worlds and {nnodes} nodes, found {} and {}",
                self.worlds.len(),
                self.nodes.len()
            )));
        }
        for (key, meta) in std::mem::take(&mut self.chains) {
            let mut segs = self.segments.remove(&key).unwrap_or_default();
            if segs.len() != meta.seg_meta.len() {
                return Err(bad(format!(
                    "chain ({}, {}, {}) lists {} segments, segment log holds {}",
                    key.0,
                    key.1,
                    key.2,
                    meta.seg_meta.len(),
                    segs.len()
                )));
            }
            let mut seg_seq = Vec::with_capacity(segs.len());
            for (s, (sq, len)) in segs.iter_mut().zip(&meta.seg_meta) {
                s.len = *len;
                seg_seq.push(*sq);
            }
            let chain = SegmentChain::restore(
                meta.epsilon,
                meta.max_degree,
                segs,
                seg_seq,
                meta.state,
                meta.open_seq,
                meta.raw_points,
            );
            self.worlds[key.0 as usize].chains.insert((key.1, key.2), chain);
        }
        if let Some((key, _)) = self.segments.iter().next() {
            return Err(bad(format!("segments for unknown chain ({}, {}, {})", key.0, key.1, key.2)));
        }
        for (w, n, v) in self.profiles {
            let wd = self
                .worlds
                .get_mut(w as usize)
                .ok_or_else(|| bad(format!("profile for unknown world {w}")))?;
            wd.profiles.insert(n, v);
        }
        config.check()?;
        Ok(Store {
            schema,
            config,
            worlds: self.worlds,
            nodes: self.nodes,
            seq,
            journal: self.journal,
        })
    }
}
