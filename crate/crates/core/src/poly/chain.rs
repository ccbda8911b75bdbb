// Copyright 2026 The mda Authors
// SPDX-License-Identifier: Apache-2.0

use super::encoder::{EncoderState, LiveEncoder};
use super::segment::Segment;
use super::PolyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Absorbed,
    SegmentClosed(usize),
}

/// Compression counters of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChainStats {
    pub raw_points: u64,
    pub segments: u64,
    pub open_points: u64,
    pub stored_scalars: u64,
}

impl ChainStats {
    /// `1 - stored / (2 · raw)`. Not clamped: a chain of single-point
    /// segments stores more than its raw pairs.
    pub fn ratio(&self) -> Option<f64> {
        if self.raw_points == 0 {
            None
        } else {
            Some(1.0 - self.stored_scalars as f64 / (2.0 * self.raw_points as f64))
        }
    }
}

/// Closed segments followed by the live encoder tail.
///
/// Every point carries a write sequence number. Segments record the
/// sequence number of their first point, so a reader bounded by a sequence
/// number sees a prefix of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentChain {
    segments: Vec<Segment>,
    seg_seq: Vec<u64>,
    encoder: LiveEncoder,
    open_seq: Vec<u64>,
    raw_points: u64,
    stored_closed: u64,
}

impl SegmentChain {
    pub fn new(epsilon: f64, max_degree: usize) -> Self {
        SegmentChain {
            segments: Vec::new(),
            seg_seq: Vec::new(),
            encoder: LiveEncoder::new(epsilon, max_degree),
            open_seq: Vec::new(),
            raw_points: 0,
            stored_closed: 0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.encoder.epsilon()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_seqs(&self) -> &[u64] {
        &self.seg_seq
    }

    pub fn encoder(&self) -> &LiveEncoder {
        &self.encoder
    }

    pub fn open_seqs(&self) -> &[u64] {
        &self.open_seq
    }

    pub fn raw_points(&self) -> u64 {
        self.raw_points
    }

    /// Timestamp of the latest point.
    pub fn last_timestamp(&self) -> Option<i64> {
        self.encoder
            .timestamps()
            .last()
            .copied()
            .or_else(|| self.segments.last().map(|s| s.end))
    }

    /// Latest timestamp among points with sequence number `<= bound`.
    pub fn last_timestamp_bounded(&self, bound: u64) -> Option<i64> {
        let (nseg, nopen) = self.visible(bound);
        if nopen > 0 {
            return Some(self.encoder.timestamps()[nopen - 1]);
        }
        if nseg > 0 {
            return Some(self.segments[nseg - 1].end);
        }
        None
    }

    /// Appends with the default sequence numbering (one per point).
    pub fn append(&mut self, t: i64, v: f64) -> Result<AppendOutcome, PolyError> {
        let seq = self.raw_points;
        self.append_seq(t, v, seq)
    }

    pub fn append_seq(&mut self, t: i64, v: f64, seq: u64) -> Result<AppendOutcome, PolyError> {
        if !v.is_finite() {
            return Err(PolyError::NonFinite(v));
        }
        if let Some(last) = self.last_timestamp() {
            if t <= last {
                return Err(PolyError::NonIncreasing { t, last });
            }
        }
        let mut closed = Vec::new();
        self.open_seq.push(seq);
        self.encoder.push(t, v, &mut closed);
        self.raw_points += 1;
        let n = closed.len();
        self.absorb(closed);
        Ok(if n == 0 {
            AppendOutcome::Absorbed
        } else {
            AppendOutcome::SegmentClosed(n)
        })
    }

    fn absorb(&mut self, closed: Vec<Segment>) {
        for s in closed {
            let take = s.len as usize;
            self.seg_seq.push(self.open_seq[0]);
            self.open_seq.drain(..take);
            self.stored_closed += s.stored_scalars();
            self.segments.push(s);
        }
        debug_assert_eq!(self.open_seq.len(), self.encoder.len());
    }

    /// Closes the open buffer into segments honoring epsilon.
    pub fn flush(&mut self) {
        let mut closed = Vec::new();
        self.encoder.flush(&mut closed);
        self.absorb(closed);
    }

    /// Closes the open buffer into constant segments, one per run of equal
    /// values. Reads at any time then return exactly what the raw buffer
    /// returned, and later appends can no longer change them.
    pub fn freeze(&mut self) {
        if self.encoder.is_empty() {
            return;
        }
        let mut closed: Vec<Segment> = Vec::new();
        for (&t, &v) in self.encoder.timestamps().iter().zip(self.encoder.values()) {
            match closed.last_mut() {
                Some(s) if s.coeffs[0].to_bits() == v.to_bits() => {
                    s.end = t;
                    s.len += 1;
                }
                _ => closed.push(Segment {
                    start: t,
                    end: t,
                    coeffs: vec![v],
                    epsilon: 0.0,
                    len: 1,
                }),
            }
        }
        self.encoder = LiveEncoder::new(self.encoder.epsilon(), self.encoder.max_degree());
        self.absorb(closed);
    }

    /// Number of visible segments and open points for a sequence bound.
    fn visible(&self, bound: u64) -> (usize, usize) {
        let nseg = self.seg_seq.partition_point(|&s| s <= bound);
        let nopen = if nseg < self.segments.len() {
            0
        } else {
            self.open_seq.partition_point(|&s| s <= bound)
        };
        (nseg, nopen)
    }

    pub fn read(&self, t: i64) -> Option<f64> {
        self.read_bounded(t, u64::MAX)
    }

    pub fn read_bounded(&self, t: i64, bound: u64) -> Option<f64> {
        self.read_counted(t, bound).0
    }

    /// Reads and reports how many segments (the open buffer counts as one)
    /// the lookup evaluated.
    pub fn read_counted(&self, t: i64, bound: u64) -> (Option<f64>, u32) {
        let (nseg, nopen) = self.visible(bound);
        let open_t = &self.encoder.timestamps()[..nopen];
        if let Some(&first) = open_t.first() {
            if t >= first {
                let i = open_t.partition_point(|&x| x <= t) - 1;
                return (Some(self.encoder.values()[i]), 1);
            }
        }
        let segs = &self.segments[..nseg];
        let i = segs.partition_point(|s| s.start <= t);
        if i == 0 {
            return (None, 0);
        }
        (Some(segs[i - 1].eval(t)), 1)
    }

    pub fn stats(&self) -> ChainStats {
        let open = self.encoder.len() as u64;
        ChainStats {
            raw_points: self.raw_points,
            segments: self.segments.len() as u64,
            open_points: open,
            stored_scalars: self.stored_closed + 2 * open,
        }
    }

    pub fn compression_ratio(&self) -> Result<f64, PolyError> {
        self.stats().ratio().ok_or(PolyError::Empty)
    }

    /// Rebuilds a chain from persisted parts.
    pub fn restore(
        epsilon: f64,
        max_degree: usize,
        segments: Vec<Segment>,
        seg_seq: Vec<u64>,
        encoder: EncoderState,
        open_seq: Vec<u64>,
        raw_points: u64,
    ) -> Self {
        let stored_closed = segments.iter().map(|s| s.stored_scalars()).sum();
        SegmentChain {
            segments,
            seg_seq,
            encoder: LiveEncoder::restore(epsilon, max_degree, encoder),
            open_seq,
            raw_points,
            stored_closed,
        }
    }
}
