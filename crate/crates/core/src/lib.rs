// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Model-driven analytics engine: a modeling language binding raw temporal
//! data to derived formulas and learned profiles, an error-bounded
//! polynomial series store, a forkable temporal graph and an incremental
//! refinement engine.

pub mod anomaly;
pub mod bench;
pub mod dsl;
pub mod graph;
pub mod ingest;
pub mod poly;
pub mod profiler;
pub mod refine;
pub mod schema;
pub mod smartgrid;
pub mod whatif;
