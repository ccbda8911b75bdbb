// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use super::fit::horner;

/// One polynomial piece of a series.
///
/// Coefficients are powers of `u = (t - start) / (end - start)`, with
/// `u = 0` when the segment covers a single instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: i64,
    pub end: i64,
    pub coeffs: Vec<f64>,
    pub epsilon: f64,
    /// Number of raw points the segment absorbed.
    pub len: u32,
}

impl Segment {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    #[inline]
    pub fn u(&self, t: i64) -> f64 {
        if self.end == self.start {
            0.0
        } else {
            (t - self.start) as f64 / (self.end - self.start) as f64
        }
    }

    /// Evaluates the polynomial, clamping `t` into the segment.
    #[inline]
    pub fn eval(&self, t: i64) -> f64 {
        horner(&self.coeffs, self.u(t.clamp(self.start, self.end)))
    }

    /// Two timestamps, the degree marker and the coefficients.
    pub fn stored_scalars(&self) -> u64 {
        self.coeffs.len() as u64 + 3
    }
}
