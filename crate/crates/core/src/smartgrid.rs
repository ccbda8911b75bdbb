// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Synthetic smart-grid fixture: model, topology, hourly meter readings with
//! injected outliers, and detection scoring.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{READINGS_HEADER, TOPOLOGY_HEADER};

pub const HOUR_MS: i64 = 3_600_000;
pub const DAY_MS: i64 = 24 * HOUR_MS;

pub const MODEL: &str = r#"class Meter {
  att energyConsumed: Double
}

class Cable {
  att capacity: Double
  rel meters: Meter[]
  derived load: Double = SUM(meters.energyConsumed)
}

class Concentrator {
  rel cables: Cable[]
}

class Transformer {
  rel concentrators: Concentrator[]
}

class ConsumptionProfiler {
    with "GaussianMixture"
    with resolution "1day"
  dependency consumption: Meter
  input "consumption | =energyConsumed"
  input "consumption | =HOURS(timestamp)"
  output probability: Double
}
"#;

/// Hour-of-day consumption multipliers: night trough, morning and evening peaks.
pub const DAILY_PROFILE: [f64; 24] = [
    0.55, 0.5, 0.48, 0.47, 0.5, 0.6, 0.8, 1.1, 1.25, 1.05, 0.95, 0.9, 1.0, 0.95, 0.9, 0.92, 1.0, 1.2, 1.5, 1.65, 1.5,
    1.25, 0.95, 0.7,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase", deny_unknown_fields)]
pub struct GeneratorConfig {
    pub meter_count: usize,
    pub cable_count: usize,
    pub days: u32,
    /// Days at the start that never carry injected outliers, so every
    /// hourly slot is trained before it is scored.
    pub warmup_days: u32,
    pub seed: u64,
    /// First reading, UTC milliseconds. Should fall on a midnight.
    pub start_ms: i64,
    pub daily_profile: Vec<f64>,
    /// Relative noise: readings are `mean · (1 + N(0, noiseSigma))`.
    pub noise_sigma: f64,
    /// Fraction of post-warm-up readings replaced by outliers.
    pub anomaly_rate: f64,
    /// Outlier offset in standard deviations.
    pub anomaly_magnitude: f64,
    /// Per-meter base consumption is drawn uniformly from this range.
    pub base_min: f64,
    pub base_max: f64,
    pub cable_capacity: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            meter_count: 10,
            cable_count: 3,
            days: 28,
            warmup_days: 28,
            seed: 42,
            // 2024-01-01T00:00:00Z
            start_ms: 1_704_067_200_000,
            daily_profile: DAILY_PROFILE.to_vec(),
            noise_sigma: 0.05,
            anomaly_rate: 0.01,
            anomaly_magnitude: 8.0,
            base_min: 0.5,
            base_max: 2.5,
            cable_capacity: 50.0,
        }
    }
}

impl GeneratorConfig {
    /// Eight weeks: the default four warm-up weeks plus four scored weeks.
    pub fn demo() -> Self {
        GeneratorConfig {
            days: 56,
            ..GeneratorConfig::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if self.meter_count == 0 || self.cable_count == 0 {
            return Err("meterCount and cableCount must be positive".into());
        }
        if self.daily_profile.len() != 24 || self.daily_profile.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err("dailyProfile needs 24 positive multipliers".into());
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err("noiseSigma must be finite and non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return Err("anomalyRate must lie in [0, 1]".into());
        }
        if !self.anomaly_magnitude.is_finite() {
            return Err("anomalyMagnitude must be finite".into());
        }
        if !(self.base_min.is_finite() && self.base_min > 0.0 && self.base_max >= self.base_min) {
            return Err("base range must be positive and ordered".into());
        }
        Ok(())
    }

    pub fn hours(&self) -> i64 {
        self.days as i64 * 24
    }
}

pub fn meter_name(i: usize) -> String {
    format!("METER_{i}")
}

pub fn cable_name(i: usize) -> String {
    format!("CABLE_{i}")
}

pub fn profiler_name(i: usize) -> String {
    format!("PROFILER_{i}")
}

pub const CONCENTRATOR: &str = "CONCENTRATOR_0";
pub const TRANSFORMER: &str = "TRANSFORMER_0";

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyRow {
    pub op: &'static str,
    pub node: String,
    pub arg: String,
    pub target: String,
    pub t: Option<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reading {
    pub meter: usize,
    pub t: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub meter: usize,
    pub t: i64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GeneratorConfig,
    pub topology: Vec<TopologyRow>,
    /// Hour by hour, meters in index order within an hour.
    pub readings: Vec<Reading>,
    pub truth: Vec<Injection>,
    /// Cable index of each meter.
    pub cable_of: Vec<usize>,
}

/// Generates the fixture. Deterministic for a given configuration.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset, String> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| e.to_string())?;
    let base: Vec<f64> = (0..cfg.meter_count)
        .map(|_| {
            if cfg.base_max > cfg.base_min {
                rng.random_range(cfg.base_min..cfg.base_max)
            } else {
                cfg.base_min
            }
        })
        .collect();
    let cable_of: Vec<usize> = (0..cfg.meter_count).map(|i| i % cfg.cable_count).collect();
    let t0 = cfg.start_ms;

    let mut topology = Vec::new();
    let mut row = |op: &'static str, node: String, arg: String, target: String, t: Option<i64>| {
        topology.push(TopologyRow { op, node, arg, target, t })
    };
    for i in 0..cfg.meter_count {
        row("node", meter_name(i), "Meter".into(), String::new(), None);
    }
    for c in 0..cfg.cable_count {
        row("node", cable_name(c), "Cable".into(), String::new(), None);
    }
    row("node", CONCENTRATOR.into(), "Concentrator".into(), String::new(), None);
    row("node", TRANSFORMER.into(), "Transformer".into(), String::new(), None);
    for i in 0..cfg.meter_count {
        row("node", profiler_name(i), "ConsumptionProfiler".into(), String::new(), None);
    }
    row("link", TRANSFORMER.into(), "concentrators".into(), CONCENTRATOR.into(), Some(t0));
    for c in 0..cfg.cable_count {
        row("link", CONCENTRATOR.into(), "cables".into(), cable_name(c), Some(t0));
        row("set", cable_name(c), "capacity".into(), cfg.cable_capacity.to_string(), Some(t0));
    }
    for (i, c) in cable_of.iter().enumerate() {
        row("link", cable_name(*c), "meters".into(), meter_name(i), Some(t0));
        row("link", profiler_name(i), "consumption".into(), meter_name(i), Some(t0));
    }

    let mut readings = Vec::with_capacity(cfg.meter_count * cfg.hours() as usize);
    let mut truth = Vec::new();
    let scored_from = cfg.warmup_days as i64 * 24;
    for h in 0..cfg.hours() {
        let t = t0 + h * HOUR_MS;
        let hour_of_day = (t.div_euclid(HOUR_MS)).rem_euclid(24) as usize;
        for (i, b) in base.iter().enumerate() {
            let mean = b * cfg.daily_profile[hour_of_day];
            let eps: f64 = noise.sample(&mut rng);
            let mut value = mean * (1.0 + eps);
            let outlier = rng.random_bool(cfg.anomaly_rate);
            if outlier && h >= scored_from {
                value += cfg.anomaly_magnitude * cfg.noise_sigma * mean;
                truth.push(Injection { meter: i, t, value });
            }
            readings.push(Reading { meter: i, t, value });
        }
    }
    Ok(Dataset {
        config: cfg.clone(),
        topology,
        readings,
        truth,
        cable_of,
    })
}

fn write_csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

impl Dataset {
    pub fn readings_csv(&self) -> String {
        write_csv(
            READINGS_HEADER,
            self.readings.iter().map(|r| {
                [
                    meter_name(r.meter),
                    "energyConsumed".to_string(),
                    r.t.to_string(),
                    r.value.to_string(),
                ]
            }),
        )
    }

    pub fn truth_csv(&self) -> String {
        write_csv(
            ["node_id", "timestamp_ms", "injected_value"],
            self.truth
                .iter()
                .map(|x| [meter_name(x.meter), x.t.to_string(), x.value.to_string()]),
        )
    }

    pub fn topology_csv(&self) -> String {
        write_csv(
            TOPOLOGY_HEADER,
            self.topology.iter().map(|r| {
                [
                    r.op.to_string(),
                    r.node.clone(),
                    r.arg.clone(),
                    r.target.clone(),
                    r.t.map(|t| t.to_string()).unwrap_or_default(),
                ]
            }),
        )
    }

    /// First timestamp that may carry an injected outlier.
    pub fn scored_from(&self) -> i64 {
        self.config.start_ms + self.config.warmup_days as i64 * DAY_MS
    }

    pub fn end(&self) -> i64 {
        self.config.start_ms + (self.config.hours() - 1) * HOUR_MS
    }

    /// Readings at or after [`Dataset::scored_from`].
    pub fn scored_population(&self) -> u64 {
        let from = self.scored_from();
        self.readings.iter().filter(|r| r.t >= from).count() as u64
    }

    /// Expected cable loads keyed by `(cable, t)`: the readings of the
    /// cable's meters, added in meter order.
    pub fn cable_load(&self) -> BTreeMap<(usize, i64), f64> {
        let mut parts: BTreeMap<(usize, i64), Vec<f64>> = BTreeMap::new();
        for r in &self.readings {
            parts.entry((self.cable_of[r.meter], r.t)).or_default().push(r.value);
        }
        parts.into_iter().map(|(k, v)| (k, v.iter().sum())).collect()
    }
}

/// Confusion counts and the scores derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionMetrics {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    /// 1 when there are no alerts.
    pub precision: f64,
    /// 1 when there is nothing to find.
    pub recall: f64,
    pub accuracy: f64,
}

/// Scores alerts against injected rows. An alert matches an unmatched
/// injection on the same node with `|Δt| <= window`; each injection matches
/// at most one alert, earliest first. `population` is the number of scored
/// readings, needed for the true-negative count.
pub fn evaluate_detection(
    alerts: &[(String, i64)],
    truth: &[(String, i64)],
    window: i64,
    population: u64,
) -> DetectionMetrics {
    let mut open: BTreeMap<&str, Vec<(i64, bool)>> = BTreeMap::new();
    for (node, t) in truth {
        open.entry(node.as_str()).or_default().push((*t, false));
    }
    for v in open.values_mut() {
        v.sort_unstable();
    }
    let mut tp = 0u64;
    let mut sorted: Vec<&(String, i64)> = alerts.iter().collect();
    sorted.sort_by_key(|a| a.1);
    for (node, t) in sorted {
        let Some(cands) = open.get_mut(node.as_str()) else {
            continue;
        };
        if let Some(c) = cands.iter_mut().find(|(tt, used)| !used && (tt - t).abs() <= window) {
            c.1 = true;
            tp += 1;
        }
    }
    let fp = alerts.len() as u64 - tp;
    let fneg = truth.len() as u64 - tp;
    let tn = population.saturating_sub(tp + fp + fneg);
    let ratio = |a: u64, b: u64| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    DetectionMetrics {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        true_negatives: tn,
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fneg),
        accuracy: ratio(tp + tn, population.max(tp + fp + fneg)),
    }
}
