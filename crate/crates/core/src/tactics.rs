//! The footstep audibility rule, shared by the simulator (ground truth) and
//! the pixel extractor so both sides label exactly the same moments.

use serde::{Deserialize, Serialize};

use crate::types::Team;

/// Parameters of the "heard footstep" rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootstepRule {
    /// Pixels; an enemy within this distance of a moving agent hears it.
    pub radius: f64,
    /// Minimum per-frame displacement (pixels) that makes a step audible.
    pub v_min: f64,
    /// Minimum frames between two events for the same agent.
    pub debounce_frames: usize,
}

impl FootstepRule {
    pub fn new(radius: f64, fps: usize) -> Self {
        Self { radius, v_min: 1.5, debounce_frames: fps }
    }
}

/// Sequential reducer over per-frame agent positions.
///
/// `positions[a]` is the icon centre of agent `a`, or `None` when the agent is
/// dead or not visible.
#[derive(Clone, Debug)]
pub struct FootstepTracker {
    rule: FootstepRule,
    teams: Vec<Team>,
    prev: Option<Vec<Option<(i32, i32)>>>,
    last_event: Vec<Option<usize>>,
}

impl FootstepTracker {
    pub fn new(rule: FootstepRule, teams: Vec<Team>) -> Self {
        let n = teams.len();
        Self { rule, teams, prev: None, last_event: vec![None; n] }
    }

    /// Feed the positions of `frame` (frames must arrive in increasing order)
    /// and return the agents whose footsteps are heard at this frame.
    pub fn observe(&mut self, frame: usize, positions: &[Option<(i32, i32)>]) -> Vec<usize> {
        let mut heard = Vec::new();
        if let Some(prev) = &self.prev {
            for (a, (&now, &before)) in positions.iter().zip(prev.iter()).enumerate() {
                let (Some(p), Some(q)) = (now, before) else { continue };
                if dist(p, q) < self.rule.v_min {
                    continue;
                }
                let audible = positions.iter().enumerate().any(|(b, &other)| {
                    self.teams[b] != self.teams[a] && other.is_some_and(|o| dist(o, p) <= self.rule.radius)
                });
                if !audible {
                    continue;
                }
                if self.last_event[a].is_some_and(|l| frame < l + self.rule.debounce_frames) {
                    continue;
                }
                self.last_event[a] = Some(frame);
                heard.push(a);
            }
        }
        self.prev = Some(positions.to_vec());
        heard
    }
}

pub fn dist(a: (i32, i32), b: (i32, i32)) -> f64 {
    let dx = (a.0 - b.0) as f64;
    let dy = (a.1 - b.1) as f64;
    (dx * dx + dy * dy).sqrt()
}
