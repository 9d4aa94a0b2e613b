//! Gesture segmentation by a parameter-adaptive sliding window over per-frame
//! point counts.
//!
//! A dynamic point threshold is derived from the count distribution of recent
//! idle frames. Frames at or above it are motion frames. A gesture starts when
//! the motion window holds enough motion frames and ends once the whole window
//! is static again.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cloud::{FrameStream, GestureCloud};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmenterConfig {
    /// Length of the idle history the threshold is computed from.
    pub hist_len: usize,
    /// Sliding motion-detection window length.
    pub win_len: usize,
    /// Motion frames required inside the window to open a segment.
    pub min_motion: usize,
    /// Quantile of the idle count distribution used as threshold.
    pub quantile: f64,
    /// Lower bound on the threshold, in points.
    pub floor: usize,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self { hist_len: 50, win_len: 10, min_motion: 8, quantile: 0.7, floor: 12 }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 1 <= self.min_motion
            && self.min_motion <= self.win_len
            && self.win_len <= self.hist_len
            && self.quantile > 0.0
            && self.quantile < 1.0
            && self.floor >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("segmenter config {self:?}")))
        }
    }
}

/// Inclusive range of frame indices holding one gesture motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_frame: u64,
    pub end_frame: u64,
    pub frame_count: usize,
    pub threshold_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameClass {
    Motion,
    Static,
}

/// Nearest-rank `quantile` of the trailing `hist_len` counts, floored.
pub fn dynamic_threshold(counts: &[usize], cfg: &SegmenterConfig) -> Result<usize> {
    if counts.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let take = cfg.hist_len.min(counts.len());
    let mut window = counts[counts.len() - take..].to_vec();
    window.sort_unstable();
    let rank = ((cfg.quantile * take as f64) - 1e-9).ceil().max(1.0) as usize;
    let value = window[rank.min(take) - 1];
    Ok(value.max(cfg.floor))
}

/// A count reaching the threshold is motion.
pub fn classify_frame(count: usize, p_thr: usize) -> FrameClass {
    if count >= p_thr {
        FrameClass::Motion
    } else {
        FrameClass::Static
    }
}

enum State {
    Idle,
    Motion { start: usize, last_motion: usize, thr: usize },
}

/// Idle-frame history used for thresholding; in-segment frames never enter it.
struct History {
    entries: Vec<(usize, usize)>,
}

impl History {
    fn threshold(&self, before: usize, cfg: &SegmenterConfig) -> usize {
        let end = self.entries.partition_point(|&(pos, _)| pos < before);
        if end == 0 {
            return cfg.floor;
        }
        let start = end.saturating_sub(cfg.hist_len);
        let counts: Vec<usize> = self.entries[start..end].iter().map(|&(_, c)| c).collect();
        dynamic_threshold(&counts, cfg).unwrap_or(cfg.floor)
    }
}

/// Runs the two-state segmentation machine over a whole stream.
pub fn segment_stream<T: Scalar>(s: &FrameStream<T>, cfg: &SegmenterConfig) -> Result<Vec<Segment>> {
    segment_counts(&s.counts(), cfg).map(|segs| {
        segs.into_iter()
            .map(|(a, b, thr)| Segment {
                start_frame: s.frames[a].index,
                end_frame: s.frames[b].index,
                frame_count: b - a + 1,
                threshold_used: thr,
            })
            .collect()
    })
}

/// Segmentation on raw counts; returns `(start_pos, end_pos, threshold)`.
pub fn segment_counts(counts: &[usize], cfg: &SegmenterConfig) -> Result<Vec<(usize, usize, usize)>> {
    cfg.validate()?;
    let n = cfg.win_len;
    if counts.len() < n {
        return Err(Error::StreamTooShort { frames: counts.len(), needed: n });
    }
    let mut history = History { entries: Vec::with_capacity(counts.len()) };
    let mut window: VecDeque<(usize, bool)> = VecDeque::with_capacity(n + 1);
    let mut state = State::Idle;
    let mut out = Vec::new();

    for (pos, &count) in counts.iter().enumerate() {
        match state {
            State::Idle => {
                let thr = history.threshold(pos, cfg);
                push_window(&mut window, n, (pos, count >= thr));
                history.entries.push((pos, count));

                if pos + 1 < n || motion_in(&window) < cfg.min_motion {
                    continue;
                }
                let start = window.iter().find(|w| w.1).map(|w| w.0).expect("motion frame present");
                // Re-check the window under the baseline that excludes the candidate motion.
                let frozen = history.threshold(start, cfg);
                let reflagged: VecDeque<(usize, bool)> =
                    window.iter().map(|&(p, _)| (p, counts[p] >= frozen)).collect();
                if motion_in(&reflagged) < cfg.min_motion {
                    continue;
                }
                let last_motion = reflagged.iter().rev().find(|w| w.1).map(|w| w.0).expect("motion frame present");
                window = reflagged;
                history.entries.retain(|&(p, _)| p < start);
                state = State::Motion { start, last_motion, thr: frozen };
            }
            State::Motion { start, last_motion, thr } => {
                let is_motion = count >= thr;
                push_window(&mut window, n, (pos, is_motion));
                let last_motion = if is_motion { pos } else { last_motion };
                if window.len() == n && motion_in(&window) == 0 {
                    out.push((start, last_motion, thr));
                    history.entries.extend((last_motion + 1..=pos).map(|p| (p, counts[p])));
                    state = State::Idle;
                } else {
                    state = State::Motion { start, last_motion, thr };
                }
            }
        }
    }
    if let State::Motion { start, last_motion, thr } = state {
        out.push((start, last_motion, thr));
    }
    Ok(out)
}

fn push_window(window: &mut VecDeque<(usize, bool)>, n: usize, item: (usize, bool)) {
    window.push_back(item);
    while window.len() > n {
        window.pop_front();
    }
}

fn motion_in(window: &VecDeque<(usize, bool)>) -> usize {
    window.iter().filter(|w| w.1).count()
}

/// Concatenates the points of every frame in the segment, in frame order.
pub fn aggregate_segment<T: Scalar>(s: &FrameStream<T>, seg: &Segment) -> Result<GestureCloud<T>> {
    let out_of_range = || Error::SegmentOutOfRange { start: seg.start_frame, end: seg.end_frame };
    if seg.start_frame > seg.end_frame {
        return Err(out_of_range());
    }
    let a = s.position_of(seg.start_frame).ok_or_else(out_of_range)?;
    let b = s.position_of(seg.end_frame).ok_or_else(out_of_range)?;
    let points = s.frames[a..=b].iter().flat_map(|f| f.points.iter().copied()).collect();
    Ok(GestureCloud {
        points,
        start_frame: seg.start_frame,
        end_frame: seg.end_frame,
        source: s.meta.get("source").cloned().unwrap_or_default(),
    })
}
