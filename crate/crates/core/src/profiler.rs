// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Online per-slot Gaussian mixtures for learned attributes.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::dsl::Func;

const HOUR_MS: i64 = 3_600_000;
const DAY_MS: i64 = 86_400_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilerConfig {
    /// Components per slot.
    pub k_max: usize,
    /// Match threshold in standard deviations.
    pub tau: f64,
    /// Probability below which a value is suspicious.
    pub theta: f64,
    /// Samples a slot needs before it scores values.
    pub n_min: u64,
    pub var_floor: f64,
    /// Shift applied to timestamps before slotting, in milliseconds.
    pub anchor_offset_ms: i64,
}

impl Default for ProfilerConfig {
    fn default() -> Self {
        ProfilerConfig {
            k_max: 3,
            tau: 3.0,
            theta: 0.05,
            n_min: 20,
            var_floor: 1e-6,
            anchor_offset_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfilerError {
    #[error("invalid profiler configuration: {0}")]
    Config(String),
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("slot {slot} out of range (profile has {count} slots)")]
    Slot { slot: usize, count: usize },
    #[error("profile encoding truncated at byte {0}")]
    Truncated(usize),
}

impl ProfilerConfig {
    pub fn check(&self) -> Result<(), ProfilerError> {
        let bad = |m: &str| Err(ProfilerError::Config(m.to_string()));
        if self.k_max < 1 {
            return bad("k_max must be at least 1");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return bad("theta must lie strictly between 0 and 1");
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return bad("var_floor must be positive");
        }
        if self.n_min < 1 {
            return bad("n_min must be at least 1");
        }
        Ok(())
    }
}

/// Slot index of `t` for a context function over `slots` slots.
pub fn slot_of(t: i64, context: Option<Func>, slots: u32, cfg: &ProfilerConfig) -> usize {
    let unit = match context {
        Some(Func::Hours) => HOUR_MS,
        Some(Func::Days) => DAY_MS,
        _ => return 0,
    };
    (t + cfg.anchor_offset_ms).div_euclid(unit).rem_euclid(slots as i64) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub count: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl Component {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let m2 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        Component {
            count: values.len() as u64,
            mean,
            m2,
        }
    }

    pub fn variance(&self, var_floor: f64) -> f64 {
        (self.m2 / self.count as f64).max(var_floor)
    }

    fn sigma(&self, var_floor: f64) -> f64 {
        self.variance(var_floor).sqrt()
    }

    fn absorb(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Slot {
    pub total: u64,
    pub components: Vec<Component>,
    /// First samples, kept until the slot has seen `n_min` of them.
    pub warmup: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Score {
    Probability(f64),
    InsufficientData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Normal,
    Suspicious,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Normal => "normal",
            Verdict::Suspicious => "suspicious",
            Verdict::Unknown => "unknown",
        })
    }
}

/// Standard-normal two-sided tail probability `P(|Z| >= z)`.
pub fn two_sided_tail(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureProfile {
    pub slots: Vec<Slot>,
}

impl MixtureProfile {
    pub fn new(slot_count: usize) -> Self {
        MixtureProfile {
            slots: vec![Slot::default(); slot_count.max(1)],
        }
    }

    fn slot(&self, slot: usize) -> Result<&Slot, ProfilerError> {
        self.slots.get(slot).ok_or(ProfilerError::Slot {
            slot,
            count: self.slots.len(),
        })
    }

    /// Components currently describing `slot`. During warm-up they are
    /// derived from the buffered samples.
    pub fn components(&self, slot: usize, cfg: &ProfilerConfig) -> Result<Vec<Component>, ProfilerError> {
        let s = self.slot(slot)?;
        if s.warmup.is_empty() {
            Ok(s.components.clone())
        } else {
            Ok(initial_components(&s.warmup, cfg))
        }
    }

    pub fn update(&mut self, slot: usize, v: f64, cfg: &ProfilerConfig) -> Result<(), ProfilerError> {
        if !v.is_finite() {
            return Err(ProfilerError::NonFinite(v));
        }
        let count = self.slots.len();
        let s = self.slots.get_mut(slot).ok_or(ProfilerError::Slot { slot, count })?;
        s.total += 1;
        if s.components.is_empty() {
            s.warmup.push(v);
            if s.total >= cfg.n_min {
                s.components = initial_components(&s.warmup, cfg);
                s.warmup = Vec::new();
            }
            return Ok(());
        }
        let (best, z) = nearest(&s.components, v, cfg.var_floor);
        if z <= cfg.tau {
            s.components[best].absorb(v);
        } else {
            let fresh = Component {
                count: 1,
                mean: v,
                m2: 0.0,
            };
            if s.components.len() < cfg.k_max {
                s.components.push(fresh);
            } else {
                let weakest = (0..s.components.len())
                    .min_by_key(|&i| s.components[i].count)
                    .expect("non-empty");
                s.components[weakest] = fresh;
            }
        }
        Ok(())
    }

    pub fn probability(&self, slot: usize, v: f64, cfg: &ProfilerConfig) -> Result<Score, ProfilerError> {
        if !v.is_finite() {
            return Err(ProfilerError::NonFinite(v));
        }
        let s = self.slot(slot)?;
        if s.total < cfg.n_min {
            return Ok(Score::InsufficientData);
        }
        let comps = self.components(slot, cfg)?;
        let total: u64 = comps.iter().map(|c| c.count).sum();
        let p: f64 = comps
            .iter()
            .map(|c| {
                let w = c.count as f64 / total as f64;
                w * two_sided_tail((v - c.mean) / c.sigma(cfg.var_floor))
            })
            .sum();
        Ok(Score::Probability(p.clamp(0.0, 1.0)))
    }

    pub fn classify(&self, slot: usize, v: f64, cfg: &ProfilerConfig) -> Result<Verdict, ProfilerError> {
        Ok(match self.probability(slot, v, cfg)? {
            Score::InsufficientData => Verdict::Unknown,
            Score::Probability(p) if p < cfg.theta => Verdict::Suspicious,
            Score::Probability(_) => Verdict::Normal,
        })
    }

    /// Mixture mean of a slot.
    pub fn expected_value(&self, slot: usize, cfg: &ProfilerConfig) -> Result<Option<f64>, ProfilerError> {
        let s = self.slot(slot)?;
        if s.total < cfg.n_min {
            return Ok(None);
        }
        let comps = self.components(slot, cfg)?;
        let total: u64 = comps.iter().map(|c| c.count).sum();
        Ok(Some(
            comps
                .iter()
                .map(|c| c.count as f64 / total as f64 * c.mean)
                .sum(),
        ))
    }

    /// Weights of the components of a slot, summing to one.
    pub fn weights(&self, slot: usize, cfg: &ProfilerConfig) -> Result<Vec<f64>, ProfilerError> {
        let comps = self.components(slot, cfg)?;
        let total: u64 = comps.iter().map(|c| c.count).sum();
        Ok(comps.iter().map(|c| c.count as f64 / total as f64).collect())
    }
}

impl MixtureProfile {
    /// Appends the little-endian encoding: slot count, then per slot the
    /// total, the component triples and any buffered warm-up samples.
    pub fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.slots.len() as u32).to_le_bytes());
        for s in &self.slots {
            out.extend_from_slice(&s.total.to_le_bytes());
            out.extend_from_slice(&(s.components.len() as u32).to_le_bytes());
            for c in &s.components {
                out.extend_from_slice(&c.count.to_le_bytes());
                out.extend_from_slice(&c.mean.to_le_bytes());
                out.extend_from_slice(&c.m2.to_le_bytes());
            }
            out.extend_from_slice(&(s.warmup.len() as u32).to_le_bytes());
            for v in &s.warmup {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }

    /// Decodes a profile, returning it with the number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Self, usize), ProfilerError> {
        let mut r = Reader { bytes, pos: 0 };
        let n = r.u32()? as usize;
        let mut slots = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let total = r.u64()?;
            let k = r.u32()? as usize;
            let mut components = Vec::with_capacity(k.min(64));
            for _ in 0..k {
                components.push(Component {
                    count: r.u64()?,
                    mean: r.f64()?,
                    m2: r.f64()?,
                });
            }
            let w = r.u32()? as usize;
            let mut warmup = Vec::with_capacity(w.min(1 << 16));
            for _ in 0..w {
                warmup.push(r.f64()?);
            }
            slots.push(Slot {
                total,
                components,
                warmup,
            });
        }
        Ok((MixtureProfile { slots }, r.pos))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ProfilerError> {
        let end = self.pos + N;
        let b = self.bytes.get(self.pos..end).ok_or(ProfilerError::Truncated(self.pos))?;
        self.pos = end;
        Ok(b.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32, ProfilerError> {
        self.take().map(u32::from_le_bytes)
    }
    fn u64(&mut self) -> Result<u64, ProfilerError> {
        self.take().map(u64::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, ProfilerError> {
        self.take().map(f64::from_le_bytes)
    }
}

fn nearest(comps: &[Component], v: f64, var_floor: f64) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in comps.iter().enumerate() {
        let z = (v - c.mean).abs() / c.sigma(var_floor);
        if z < best.1 {
            best = (i, z);
        }
    }
    best
}

/// Splits the sorted warm-up sample into up to `k_max` groups. Each round
/// takes the split with the largest drop in within-group squared deviation
/// and keeps it only if the two means are more than `tau` standard
/// deviations apart.
fn initial_components(samples: &[f64], cfg: &ProfilerConfig) -> Vec<Component> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups: Vec<(usize, usize)> = vec![(0, sorted.len())];
    while groups.len() < cfg.k_max {
        let mut best: Option<(f64, usize, usize)> = None;
        for (gi, &(a, b)) in groups.iter().enumerate() {
            if b - a < 2 {
                continue;
            }
            let whole = Component::of(&sorted[a..b]).m2;
            for i in a + 1..b {
                let gain = Component::of(&sorted[a..i]).m2 + Component::of(&sorted[i..b]).m2 - whole;
                if best.is_none_or(|(g, _, _)| gain < g) {
                    best = Some((gain, gi, i));
                }
            }
        }
        let Some((_, gi, i)) = best else { break };
        let (a, b) = groups[gi];
        let left = Component::of(&sorted[a..i]);
        let right = Component::of(&sorted[i..b]);
        let gap = (left.mean - right.mean).abs();
        if gap <= cfg.tau * (left.sigma(cfg.var_floor) + right.sigma(cfg.var_floor)) {
            break;
        }
        groups.splice(gi..=gi, [(a, i), (i, b)]);
    }
    groups.iter().map(|&(a, b)| Component::of(&sorted[a..b])).collect()
}
