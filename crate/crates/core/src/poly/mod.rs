// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

//! Error-bounded piecewise-polynomial storage for numeric series.

pub mod chain;
pub mod encoder;
pub mod fit;
pub mod segment;

pub use chain::{AppendOutcome, ChainStats, SegmentChain};
pub use encoder::{degree_budget, EncoderState, LiveEncoder, DEFAULT_MAX_DEGREE};
pub use segment::Segment;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("timestamp {t} is not after the last appended timestamp {last}")]
    NonIncreasing { t: i64, last: i64 },
    #[error("value {0} is not finite")]
    NonFinite(f64),
    #[error("chain holds no points")]
    Empty,
}
