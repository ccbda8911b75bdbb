// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Exclusive access to a store directory.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mda_core::graph::persist::GRAPH_FILE;
use mda_core::graph::{Store, StoreConfig};
use mda_core::schema::Schema;

use crate::fail::{Classify, Outcome};

pub const LOCK_FILE: &str = "store.lock";

/// Held for the lifetime of a command; removes the lock file on drop.
#[derive(Debug)]
pub struct StoreLock {
    path: PathBuf,
}

impl StoreLock {
    pub fn acquire(dir: &Path) -> Result<StoreLock> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                // Best effort: the pid only helps a person clear a stale lock.
                let _ = writeln!(f, "{}", std::process::id());
                Ok(StoreLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => bail!(
                "store {} is in use: {} exists (delete it if no other mda process is running)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("cannot create {}", path.display())),
        }
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn exists(dir: &Path) -> bool {
    dir.join(GRAPH_FILE).is_file()
}

pub fn open(dir: &Path) -> Result<Store> {
    if !exists(dir) {
        bail!("no store at {}", dir.display());
    }
    Store::open(dir).with_context(|| format!("cannot open store {}", dir.display()))
}

/// Opens the store in `dir`, or creates it from `model` when there is none.
/// The flag is true for a new store.
pub fn open_or_create(dir: &Path, model: Option<&Path>, config: &StoreConfig) -> Outcome<(Store, bool)> {
    if exists(dir) {
        return Ok((open(dir).usage()?, false));
    }
    let model = model
        .context("the store is new: pass --model or set `model` in analytics.cfg")
        .usage()?;
    let text = fs::read_to_string(model)
        .with_context(|| format!("cannot read {}", model.display()))
        .usage()?;
    let schema = Schema::parse(&text)
        .map_err(|d| {
            let file = model.display().to_string();
            anyhow!(d.iter().map(|x| x.render(&file)).collect::<Vec<_>>().join("\n"))
        })
        .domain()?;
    Ok((Store::new(schema, config.clone()).usage()?, true))
}
