// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use super::fit::{fit, horner, max_residual};
use super::segment::Segment;

pub const DEFAULT_MAX_DEGREE: usize = 8;

/// Highest degree a buffer of `n` points may use: a segment never stores
/// more scalars than the raw points it replaces.
pub fn degree_budget(n: usize, max_degree: usize) -> usize {
    (n / 2).saturating_sub(1).min(max_degree)
}

/// Streaming encoder for the open tail of a series.
///
/// Points `[0, verified)` are represented by `coeffs` within epsilon. Points
/// after that failed every degree tried so far but may still be absorbed
/// once the buffer is long enough to test a higher degree.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveEncoder {
    epsilon: f64,
    max_degree: usize,
    ts: Vec<i64>,
    vs: Vec<f64>,
    verified: usize,
    coeffs: Vec<f64>,
    /// Length of `[ts[0], t]` the coefficients were fitted on.
    span: f64,
}

/// Raw encoder state, for persistence.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    pub ts: Vec<i64>,
    pub vs: Vec<f64>,
    pub verified: usize,
    pub coeffs: Vec<f64>,
    pub span: f64,
}

impl LiveEncoder {
    pub fn new(epsilon: f64, max_degree: usize) -> Self {
        assert!(epsilon >= 0.0 && epsilon.is_finite(), "epsilon must be finite and >= 0");
        LiveEncoder {
            epsilon,
            max_degree,
            ts: Vec::new(),
            vs: Vec::new(),
            verified: 0,
            coeffs: Vec::new(),
            span: 0.0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.ts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ts.is_empty()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.ts
    }

    pub fn values(&self) -> &[f64] {
        &self.vs
    }

    pub fn state(&self) -> EncoderState {
        EncoderState {
            ts: self.ts.clone(),
            vs: self.vs.clone(),
            verified: self.verified,
            coeffs: self.coeffs.clone(),
            span: self.span,
        }
    }

    pub fn restore(epsilon: f64, max_degree: usize, s: EncoderState) -> Self {
        LiveEncoder {
            epsilon,
            max_degree,
            ts: s.ts,
            vs: s.vs,
            verified: s.verified,
            coeffs: s.coeffs,
            span: s.span,
        }
    }

    fn reset_with(&mut self, t: i64, v: f64) {
        self.ts.clear();
        self.vs.clear();
        self.ts.push(t);
        self.vs.push(v);
        self.verified = 1;
        self.coeffs = vec![v];
        self.span = 0.0;
    }

    /// Adds a point. Segments closed as a consequence go to `out`.
    /// The caller guarantees increasing timestamps and finite values.
    pub fn push(&mut self, t: i64, v: f64, out: &mut Vec<Segment>) {
        if self.ts.is_empty() {
            self.reset_with(t, v);
            return;
        }
        if self.verified == self.ts.len() {
            let u = if self.span > 0.0 {
                (t - self.ts[0]) as f64 / self.span
            } else {
                0.0
            };
            if (horner(&self.coeffs, u) - v).abs() <= self.epsilon {
                self.ts.push(t);
                self.vs.push(v);
                self.verified += 1;
                return;
            }
        }
        self.ts.push(t);
        self.vs.push(v);
        let n = self.ts.len();
        let budget = degree_budget(n, self.max_degree);
        let us = normalized(&self.ts);
        if let Some(c) = fit_within(&us, &self.vs, self.degree()..=budget, self.epsilon) {
            self.coeffs = c;
            self.verified = n;
            self.span = (self.ts[n - 1] - self.ts[0]) as f64;
            return;
        }
        if budget < self.max_degree {
            // A higher degree becomes testable with more points.
            return;
        }
        let tail_t = self.ts.split_off(self.verified);
        let tail_v = self.vs.split_off(self.verified);
        self.close_into(out);
        for (t, v) in tail_t.into_iter().zip(tail_v) {
            self.push(t, v, out);
        }
    }

    /// Closes everything buffered.
    pub fn flush(&mut self, out: &mut Vec<Segment>) {
        while !self.ts.is_empty() {
            if self.verified == self.ts.len() {
                self.close_into(out);
                return;
            }
            let tail_t = self.ts.split_off(self.verified);
            let tail_v = self.vs.split_off(self.verified);
            self.close_into(out);
            for (t, v) in tail_t.into_iter().zip(tail_v) {
                self.push(t, v, out);
            }
        }
    }

    /// Turns the verified buffer into a segment and clears the encoder.
    fn close_into(&mut self, out: &mut Vec<Segment>) {
        debug_assert_eq!(self.verified, self.ts.len());
        let ts = std::mem::take(&mut self.ts);
        let vs = std::mem::take(&mut self.vs);
        let coeffs = std::mem::take(&mut self.coeffs);
        let n = ts.len();
        let length = (ts[n - 1] - ts[0]) as f64;
        let rescaled: Vec<f64> = if self.span > 0.0 && length > 0.0 {
            let r = length / self.span;
            let mut f = 1.0;
            coeffs
                .iter()
                .map(|c| {
                    let x = c * f;
                    f *= r;
                    x
                })
                .collect()
        } else {
            coeffs
        };
        self.verified = 0;
        self.span = 0.0;
        let us = normalized(&ts);
        if max_residual(&rescaled, &us, &vs) <= self.epsilon {
            out.push(self.segment(&ts, rescaled));
            return;
        }
        self.close_fitted(&ts, &vs, &us, out);
    }

    /// Closes `ts/vs` with a fresh fit, splitting in halves if nothing
    /// within the degree budget honors epsilon.
    fn close_fitted(&self, ts: &[i64], vs: &[f64], us: &[f64], out: &mut Vec<Segment>) {
        let budget = degree_budget(ts.len(), self.max_degree);
        if let Some(c) = fit_within(us, vs, 0..=budget, self.epsilon) {
            out.push(self.segment(ts, c));
            return;
        }
        let mid = ts.len() / 2;
        for (a, b) in [(0, mid), (mid, ts.len())] {
            let part_t = &ts[a..b];
            self.close_fitted(part_t, &vs[a..b], &normalized(part_t), out);
        }
    }

    fn segment(&self, ts: &[i64], coeffs: Vec<f64>) -> Segment {
        Segment {
            start: ts[0],
            end: ts[ts.len() - 1],
            coeffs,
            epsilon: self.epsilon,
            len: ts.len() as u32,
        }
    }
}

fn normalized(ts: &[i64]) -> Vec<f64> {
    let t0 = ts[0];
    let length = (ts[ts.len() - 1] - t0) as f64;
    if length == 0.0 {
        return vec![0.0; ts.len()];
    }
    ts.iter().map(|&t| (t - t0) as f64 / length).collect()
}

/// Smallest degree in `degrees` whose fit stays within `epsilon`.
fn fit_within(
    us: &[f64],
    vs: &[f64],
    degrees: std::ops::RangeInclusive<usize>,
    epsilon: f64,
) -> Option<Vec<f64>> {
    for d in degrees {
        if let Some(c) = fit(us, vs, d) {
            if max_residual(&c, us, vs) <= epsilon {
                return Some(c);
            }
        }
    }
    None
}
