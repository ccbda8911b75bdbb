// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! `analytics.cfg` loading and merging with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use mda_core::graph::StoreConfig;
use mda_core::ingest::DEFAULT_BATCH;
use serde::Deserialize;

pub const CONFIG_FILE: &str = "analytics.cfg";

/// Options shared by every command. Flags win over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Config file [default: ./analytics.cfg when it exists]
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Store directory
    #[arg(long, global = true, value_name = "DIR")]
    pub store: Option<PathBuf>,
    /// Model file used when a store is created
    #[arg(long, global = true, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Print JSON instead of plain lines
    #[arg(long, global = true)]
    pub json: bool,
}

/// Settings of a new store. An existing store keeps the ones it was
/// created with.
#[derive(Debug, Clone, Default, Args)]
pub struct StoreFlags {
    /// Error bound for Double attributes without their own entry [default: 0]
    #[arg(long, value_name = "E")]
    pub epsilon: Option<f64>,
    /// Error bound for one attribute, as Class.attr=E (repeatable)
    #[arg(long = "epsilon-for", value_name = "CLASS.ATTR=E", value_parser = parse_epsilon_for)]
    pub epsilon_for: Vec<(String, f64)>,
    /// Mixture components per profile slot [default: 3]
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Component match threshold in standard deviations [default: 3]
    #[arg(long)]
    pub tau: Option<f64>,
    /// Probability below which a value is suspicious [default: 0.05]
    #[arg(long)]
    pub theta: Option<f64>,
    /// Samples a slot needs before it scores values [default: 20]
    #[arg(long)]
    pub n_min: Option<u64>,
}

fn parse_epsilon_for(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected Class.attr=E")?;
    if !k.contains('.') {
        return Err(format!("{k:?} is not Class.attr"));
    }
    let e: f64 = v.parse().map_err(|_| format!("{v:?} is not a number"))?;
    Ok((k.to_string(), e))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    store: Option<PathBuf>,
    model: Option<PathBuf>,
    batch: Option<usize>,
    #[serde(default)]
    epsilon: BTreeMap<String, f64>,
    #[serde(default)]
    profiler: ProfilerSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfilerSection {
    k_max: Option<usize>,
    tau: Option<f64>,
    theta: Option<f64>,
    n_min: Option<u64>,
}

/// Effective settings for one run.
#[derive(Debug, Clone)]
pub struct Settings {
    pub store: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub batch: usize,
    /// Applied when a store is created.
    pub store_config: StoreConfig,
    /// Threshold explicitly chosen by flag or file, if any.
    pub theta: Option<f64>,
    pub json: bool,
}

impl Settings {
    pub fn store_dir(&self) -> Result<&Path> {
        self.store
            .as_deref()
            .context("no store directory: pass --store or set `store` in analytics.cfg")
    }
}

fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut cfg: FileConfig = toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    // Paths in the file are relative to the file.
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.store, &mut cfg.model].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}

pub fn resolve(common: &Common, flags: &StoreFlags) -> Result<Settings> {
    let file = match &common.config {
        Some(p) => read_file(p)?,
        None if Path::new(CONFIG_FILE).is_file() => read_file(Path::new(CONFIG_FILE))?,
        None => FileConfig::default(),
    };
    let mut sc = StoreConfig::default();
    let mut file_eps = file.epsilon;
    if let Some(e) = file_eps.remove("default") {
        sc.default_epsilon = e;
    }
    sc.epsilon = file_eps;
    if let Some(e) = flags.epsilon {
        sc.default_epsilon = e;
    }
    for (k, e) in &flags.epsilon_for {
        sc.epsilon.insert(k.clone(), *e);
    }
    let p = &mut sc.profiler;
    let fp = &file.profiler;
    if let Some(v) = flags.k_max.or(fp.k_max) {
        p.k_max = v;
    }
    if let Some(v) = flags.tau.or(fp.tau) {
        p.tau = v;
    }
    let theta = flags.theta.or(fp.theta);
    if let Some(v) = theta {
        p.theta = v;
    }
    if let Some(v) = flags.n_min.or(fp.n_min) {
        p.n_min = v;
    }
    sc.check().context("invalid settings")?;
    let batch = file.batch.unwrap_or(DEFAULT_BATCH);
    if batch == 0 {
        bail!("batch must be at least 1");
    }
    Ok(Settings {
        store: common.store.clone().or(file.store),
        model: common.model.clone().or(file.model),
        batch,
        store_config: sc,
        theta,
        json: common.json,
    })
}
