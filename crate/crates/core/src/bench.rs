// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Compression and random-read measurements on synthetic signals.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{PolyError, SegmentChain, DEFAULT_MAX_DEGREE};

const STEP_MS: i64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Constant,
    Sine,
    Random,
}

impl std::str::FromStr for Signal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(Signal::Constant),
            "sine" => Ok(Signal::Sine),
            "random" => Ok(Signal::Random),
            other => Err(format!("unknown signal {other:?} (constant, sine, random)")),
        }
    }
}

/// Error bound, absolute or as a fraction of the signal's range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Epsilon {
    Absolute(f64),
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub signal: Signal,
    pub points: usize,
    pub epsilon: Epsilon,
    /// Random reads timed against the chain.
    pub reads: usize,
    /// Random reads timed against the raw CSV scan.
    pub scan_reads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            signal: Signal::Sine,
            points: 10_000,
            epsilon: Epsilon::Absolute(0.0),
            reads: 10_000,
            scan_reads: 20,
            seed: 7,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("points must be at least 1")]
    NoPoints,
    #[error("epsilon must be finite and non-negative")]
    Epsilon,
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error("read at {t} returned {got:?}, raw value {want}")]
    Mismatch { t: i64, got: Option<f64>, want: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub signal: Signal,
    pub points: usize,
    pub epsilon: f64,
    pub segments: u64,
    pub stored_scalars: u64,
    pub ratio: f64,
    /// Largest number of segments any timed read evaluated.
    pub max_segments_per_read: u32,
    pub mean_read_ns: f64,
    pub mean_scan_ns: f64,
    pub speedup: f64,
}

/// `n` samples one second apart.
pub fn signal(kind: Signal, n: usize, seed: u64) -> Vec<(i64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let t = i as i64 * STEP_MS;
            let v = match kind {
                Signal::Constant => 5.0,
                Signal::Sine => 10.0 * (i as f64 * std::f64::consts::TAU / 1000.0).sin(),
                Signal::Random => rng.random_range(0.0..10.0),
            };
            (t, v)
        })
        .collect()
}

fn range(points: &[(i64, f64)]) -> f64 {
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    hi - lo
}

/// Encodes `points` into a flushed chain.
pub fn encode(points: &[(i64, f64)], epsilon: f64) -> Result<SegmentChain, PolyError> {
    let mut chain = SegmentChain::new(epsilon, DEFAULT_MAX_DEGREE);
    for &(t, v) in points {
        chain.append(t, v)?;
    }
    chain.flush();
    Ok(chain)
}

/// Latest value at or before `t` by scanning `t,v` lines from the start.
pub fn scan_csv(csv: &str, t: i64) -> Option<f64> {
    let mut out = None;
    for line in csv.lines().skip(1) {
        let (a, b) = line.split_once(',')?;
        let ts: i64 = a.parse().ok()?;
        if ts > t {
            break;
        }
        out = b.parse().ok();
    }
    out
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if cfg.points == 0 {
        return Err(BenchError::NoPoints);
    }
    let points = signal(cfg.signal, cfg.points, cfg.seed);
    let epsilon = match cfg.epsilon {
        Epsilon::Absolute(e) => e,
        Epsilon::Relative(f) => f * range(&points),
    };
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(BenchError::Epsilon);
    }
    let chain = encode(&points, epsilon)?;
    let stats = chain.stats();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let probes: Vec<usize> = (0..cfg.reads.max(1)).map(|_| rng.random_range(0..points.len())).collect();
    let mut max_touched = 0;
    for &i in &probes {
        let (t, want) = points[i];
        let (got, touched) = chain.read_counted(t, u64::MAX);
        max_touched = max_touched.max(touched);
        if !got.is_some_and(|g| (g - want).abs() <= epsilon) {
            return Err(BenchError::Mismatch { t, got, want });
        }
    }
    let start = Instant::now();
    for &i in &probes {
        black_box(chain.read(black_box(points[i].0)));
    }
    let mean_read_ns = start.elapsed().as_nanos() as f64 / probes.len() as f64;

    let mut csv = String::from("timestamp_ms,value\n");
    for (t, v) in &points {
        csv.push_str(&format!("{t},{v}\n"));
    }
    let scans: Vec<usize> = (0..cfg.scan_reads.max(1)).map(|_| rng.random_range(0..points.len())).collect();
    let start = Instant::now();
    for &i in &scans {
        black_box(scan_csv(black_box(&csv), black_box(points[i].0)));
    }
    let mean_scan_ns = start.elapsed().as_nanos() as f64 / scans.len() as f64;

    Ok(BenchReport {
        signal: cfg.signal,
        points: cfg.points,
        epsilon,
        segments: stats.segments,
        stored_scalars: stats.stored_scalars,
        ratio: stats.ratio().expect("non-empty chain"),
        max_segments_per_read: max_touched,
        mean_read_ns,
        mean_scan_ns,
        speedup: mean_scan_ns / mean_read_ns.max(1e-3),
    })
}
