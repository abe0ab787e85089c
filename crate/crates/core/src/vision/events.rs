//! Turning per-frame icon detections into tactical event labels.

use crate::fusion::EventLabel;
use crate::map::{MapSpec, Roster};
use crate::tactics::{dist, FootstepRule, FootstepTracker};
use crate::types::{EventKind, Team};

use super::icons::{Detection, IconKind};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InferredEvents {
    pub events: Vec<EventLabel>,
    /// Event positions that fell outside every area and were assigned to the nearest one.
    pub unmapped_positions: usize,
}

/// Strongest agent detection per roster slot.
pub fn agent_positions(dets: &[Detection], n_agents: usize) -> Vec<Option<(i32, i32)>> {
    let mut best: Vec<Option<(f64, (i32, i32))>> = vec![None; n_agents];
    for d in dets.iter().filter(|d| d.kind == IconKind::Agent) {
        let Some(a) = d.agent.filter(|&a| a < n_agents) else { continue };
        if best[a].is_none_or(|(s, _)| d.score > s) {
            best[a] = Some((d.score, (d.x, d.y)));
        }
    }
    best.into_iter().map(|b| b.map(|(_, p)| p)).collect()
}

/// Events of one round from its frame-ordered detections; frame `i` is at `i / fps` seconds.
///
/// Footsteps follow the shared audibility rule; a skill use is the first
/// frame an agent's skill-effect icon appears; a spike plant is the first
/// frame the spike icon appears, credited to the nearest attacker.
pub fn infer_events(
    detections: &[Vec<Detection>],
    map: &MapSpec,
    roster: &Roster,
    rule: FootstepRule,
    fps: usize,
) -> InferredEvents {
    let n = roster.len();
    let teams: Vec<Team> = roster.agents.iter().map(|a| a.team).collect();
    let mut tracker = FootstepTracker::new(rule, teams);
    let mut out = InferredEvents::default();
    let mut skill_prev = vec![false; n];
    let mut spike_prev = false;

    let emit = |out: &mut InferredEvents, frame: usize, agent: usize, pos: (i32, i32), kind: EventKind| {
        let area = match map.area_at(pos.0, pos.1) {
            Some(a) => a,
            None => {
                out.unmapped_positions += 1;
                map.nearest_area(pos.0, pos.1)
            }
        };
        out.events.push(EventLabel {
            t: frame as f64 / fps as f64,
            team: roster.team_of(agent),
            agent: roster.agents[agent].name.clone(),
            area: map.areas[area].name.clone(),
            kind,
        });
    };

    for (frame, dets) in detections.iter().enumerate() {
        let positions = agent_positions(dets, n);

        let mut skill_now = vec![None; n];
        for d in dets.iter().filter(|d| d.kind == IconKind::Skill) {
            if let Some(a) = d.agent.filter(|&a| a < n) {
                skill_now[a].get_or_insert((d.x, d.y));
            }
        }
        for a in 0..n {
            if let (Some(p), false) = (skill_now[a], skill_prev[a]) {
                emit(&mut out, frame, a, p, EventKind::SkillUse);
            }
            skill_prev[a] = skill_now[a].is_some();
        }

        for a in tracker.observe(frame, &positions) {
            emit(&mut out, frame, a, positions[a].expect("heard agents are visible"), EventKind::FootstepHeard);
        }

        let spike = dets.iter().find(|d| d.kind == IconKind::Spike).map(|d| (d.x, d.y));
        if let (Some(p), false) = (spike, spike_prev) {
            let planter = roster
                .members(Team::Attacker)
                .filter_map(|a| positions[a].map(|q| (dist(p, q), a)))
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .map(|(_, a)| a);
            if let Some(a) = planter {
                emit(&mut out, frame, a, p, EventKind::SpikePlant);
            }
        }
        spike_prev = spike.is_some();
    }
    crate::fusion::sort_events(&mut out.events);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(a: usize, x: i32, y: i32) -> Detection {
        let team = Roster::default().team_of(a);
        Detection { kind: IconKind::Agent, agent: Some(a), team: Some(team), x, y, score: 1.0 }
    }

    #[test]
    fn skill_rising_edge_only() {
        let map = MapSpec::split6();
        let roster = Roster::default();
        let mut frames = vec![vec![]; 80];
        for f in frames.iter_mut().take(61).skip(40) {
            f.push(Detection { kind: IconKind::Skill, agent: Some(2), team: Some(Team::Attacker), x: 60, y: 60, score: 0.99 });
        }
        let got = infer_events(&frames, &map, &roster, FootstepRule::new(30.0, 8), 8);
        assert_eq!(got.events.len(), 1);
        let e = &got.events[0];
        assert_eq!((e.t, e.kind, e.agent.as_str(), e.area.as_str()), (5.0, EventKind::SkillUse, "Cedar", "mid"));
    }

    #[test]
    fn spike_credited_to_nearest_attacker() {
        let map = MapSpec::split6();
        let roster = Roster::default();
        let spike = Detection { kind: IconKind::Spike, agent: None, team: None, x: 20, y: 50, score: 1.0 };
        let frames = vec![vec![agent(0, 100, 110), agent(1, 30, 50), agent(6, 22, 62), spike]];
        let got = infer_events(&frames, &map, &roster, FootstepRule::new(30.0, 8), 8);
        assert_eq!(got.events.len(), 1);
        assert_eq!(got.events[0].agent, "Birch");
        assert_eq!(got.events[0].area, "site_a");
    }
}
