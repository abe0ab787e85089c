//! Round segmentation from per-frame timer readings and banner matches.

use serde::{Deserialize, Serialize};

use crate::types::Outcome;

/// Round cap in seconds.
pub const ROUND_CAP_S: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundBoundary {
    /// First frame showing the full-clock reading.
    pub start_frame: usize,
    /// First frame after the round (banner frame, or the frame the timer hit zero).
    pub end_frame: usize,
    pub outcome: Outcome,
    pub map: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub fps: usize,
    /// Odd median-filter width over readings.
    pub median_width: usize,
    /// Longest tolerated run of missing timer readings inside a round, seconds.
    pub max_gap_s: f64,
}

impl SegmentConfig {
    pub fn new(fps: usize) -> Self {
        Self { fps, median_width: 5, max_gap_s: 2.0 }
    }
}

/// Sliding median with edge replication; `None` is encoded as −1 so a
/// majority of missing readings yields a missing reading.
pub fn median_filter(readings: &[Option<u32>], width: usize) -> Vec<Option<u32>> {
    let half = width / 2;
    let n = readings.len();
    let val = |i: usize| readings[i].map_or(-1i64, |v| v as i64);
    (0..n)
        .map(|i| {
            let mut w: Vec<i64> = (0..width)
                .map(|k| val((i + k).saturating_sub(half).min(n - 1)))
                .collect();
            w.sort_unstable();
            let m = w[half];
            (m >= 0).then_some(m as u32)
        })
        .collect()
}

enum State {
    Idle,
    InRound { start: usize, gap: usize, last: Option<u32> },
    /// Timer reached zero; wait briefly for the banner before defaulting to a timeout.
    Expired { start: usize, end: usize },
}

/// Rounds in a reading sequence.
///
/// A round starts when the filtered reading shows the full clock after a
/// frame that did not; it ends at a banner, when the clock reaches zero, or
/// when the clock resets to full. Rounds with a run of missing readings longer
/// than `max_gap_s`, longer than the cap, or without a decided outcome are dropped.
pub fn segment_rounds(
    readings: &[Option<u32>],
    banners: &[Option<Outcome>],
    cfg: &SegmentConfig,
    map: &str,
) -> Vec<RoundBoundary> {
    let full = ROUND_CAP_S as u32;
    let filtered = median_filter(readings, cfg.median_width.max(1));
    let max_gap = (cfg.max_gap_s * cfg.fps as f64).floor() as usize;
    let max_len = ROUND_CAP_S * cfg.fps;
    let mut out = Vec::new();
    let mut state = State::Idle;
    let make = |start: usize, end: usize, outcome: Outcome| RoundBoundary {
        start_frame: start,
        end_frame: end,
        outcome,
        map: map.to_string(),
    };

    for (i, &r) in filtered.iter().enumerate() {
        let prev = if i == 0 { None } else { filtered[i - 1] };
        let fresh_start = r == Some(full) && prev != Some(full);
        state = match state {
            State::Idle => {
                if fresh_start {
                    State::InRound { start: i, gap: 0, last: r }
                } else {
                    State::Idle
                }
            }
            State::InRound { start, gap, last } => {
                if let Some(o) = banners.get(i).copied().flatten() {
                    if i - start <= max_len {
                        out.push(make(start, i, o));
                    }
                    State::Idle
                } else if r == Some(0) {
                    State::Expired { start, end: i }
                } else if fresh_start && last.is_some_and(|l| l < full) {
                    // Reset without a decided outcome: drop it and start the next round here.
                    State::InRound { start: i, gap: 0, last: r }
                } else if r.is_none() {
                    if gap + 1 > max_gap || i - start > max_len {
                        State::Idle
                    } else {
                        State::InRound { start, gap: gap + 1, last }
                    }
                } else if i - start > max_len {
                    State::Idle
                } else {
                    State::InRound { start, gap: 0, last: r }
                }
            }
            State::Expired { start, end } => {
                if let Some(o) = banners.get(i).copied().flatten() {
                    out.push(make(start, end, o));
                    State::Idle
                } else if i - end > max_gap || fresh_start {
                    out.push(make(start, end, Outcome::DefenderWin));
                    if fresh_start {
                        State::InRound { start: i, gap: 0, last: r }
                    } else {
                        State::Idle
                    }
                } else {
                    State::Expired { start, end }
                }
            }
        };
    }
    if let State::Expired { start, end } = state {
        out.push(make(start, end, Outcome::DefenderWin));
    }
    out
}
