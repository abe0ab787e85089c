//! Scoring extraction output against simulator ground truth.

use serde::{Deserialize, Serialize};

use crate::fusion::EventLabel;

use super::icons::{Detection, IconKind};

/// Matched, predicted and true item counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub matched: usize,
    pub predicted: usize,
    pub truth: usize,
}

impl MatchCounts {
    /// Empty predictions count as perfectly precise.
    pub fn precision(&self) -> f64 {
        if self.predicted == 0 { 1.0 } else { self.matched as f64 / self.predicted as f64 }
    }

    pub fn recall(&self) -> f64 {
        if self.truth == 0 { 1.0 } else { self.matched as f64 / self.truth as f64 }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
    }

    pub fn add(&mut self, other: MatchCounts) {
        self.matched += other.matched;
        self.predicted += other.predicted;
        self.truth += other.truth;
    }
}

/// Greedy one-to-one matching of events with equal kind, team, agent and area
/// whose times differ by at most `tolerance_s`. Truth events are visited in
/// order and take the closest unused prediction.
pub fn match_events(predicted: &[EventLabel], truth: &[EventLabel], tolerance_s: f64) -> MatchCounts {
    let mut used = vec![false; predicted.len()];
    let mut matched = 0;
    for t in truth {
        let best = predicted
            .iter()
            .enumerate()
            .filter(|(i, p)| {
                !used[*i]
                    && p.kind == t.kind
                    && p.team == t.team
                    && p.agent == t.agent
                    && p.area == t.area
                    && (p.t - t.t).abs() <= tolerance_s + 1e-9
            })
            .min_by(|a, b| (a.1.t - t.t).abs().total_cmp(&(b.1.t - t.t).abs()));
        if let Some((i, _)) = best {
            used[i] = true;
            matched += 1;
        }
    }
    MatchCounts { matched, predicted: predicted.len(), truth: truth.len() }
}

/// Agent detections against rendered icon centres (`None` = not drawn);
/// a detection matches when it names the right roster slot within `tolerance_px`.
pub fn match_agents(dets: &[Detection], truth: &[Option<(i32, i32)>], tolerance_px: i32) -> MatchCounts {
    let agents: Vec<&Detection> = dets.iter().filter(|d| d.kind == IconKind::Agent).collect();
    let mut used = vec![false; agents.len()];
    let mut matched = 0;
    for (a, pos) in truth.iter().enumerate() {
        let Some((x, y)) = *pos else { continue };
        let hit = agents.iter().enumerate().position(|(i, d)| {
            !used[i] && d.agent == Some(a) && (d.x - x).abs() <= tolerance_px && (d.y - y).abs() <= tolerance_px
        });
        if let Some(i) = hit {
            used[i] = true;
            matched += 1;
        }
    }
    MatchCounts { matched, predicted: agents.len(), truth: truth.iter().flatten().count() }
}
