//! Round simulator: two five-agent teams walking an area graph, duelling when
//! they share an area, using skills and planting the spike.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::fusion::{sort_events, EventLabel};
use crate::map::MapSpec;
use crate::rng::SeededRng;
use crate::tactics::{dist, FootstepRule, FootstepTracker};
use crate::types::{EventKind, Outcome, Team};

use super::config::{Policy, SimConfig};

/// Icon centres stay this far from the playfield edge.
const EDGE: i32 = 4;
/// Frames without progress before an agent picks a new waypoint.
const STUCK_FRAMES: usize = 12;
/// Staging attackers keep within this many pixels of their target site.
const STAGE_BAND: f64 = 12.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillIcon {
    pub agent: usize,
    pub x: i32,
    pub y: i32,
}

/// Everything drawn on one playfield frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameState {
    /// Icon centre per roster slot; `None` once dead.
    pub agents: Vec<Option<(i32, i32)>>,
    pub skills: Vec<SkillIcon>,
    pub spike: Option<(i32, i32)>,
}

/// Hidden per-round team tendencies, indexed by `Team::index`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TeamTraits {
    pub run_prob: [f64; 2],
    pub skill_rate: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Elimination,
    Detonation,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub outcome: Outcome,
    pub end: EndReason,
    /// Round length in frames; frame `f` is at `f / fps` seconds.
    pub n_frames: usize,
    pub fps: usize,
    pub traits: TeamTraits,
    /// Sorted by time, kind, agent.
    pub events: Vec<EventLabel>,
    /// Per-frame render state; empty when simulated without recording.
    pub frames: Vec<FrameState>,
}

impl GroundTruth {
    pub fn duration_s(&self) -> f64 {
        self.n_frames as f64 / self.fps as f64
    }
}

#[derive(Clone, Debug)]
struct Agent {
    team: Team,
    pos: (i32, i32),
    alive: bool,
    goal: usize,
    waypoint: (i32, i32),
    hold_until: usize,
    resting: bool,
    stuck: usize,
    cooldown_until: usize,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    map: &'a MapSpec,
    rng: SeededRng,
    agents: Vec<Agent>,
    skills: Vec<(SkillIcon, usize)>,
    spike: Option<(i32, i32)>,
    spike_area: Option<usize>,
    detonate_at: usize,
    traits: TeamTraits,
    info: [f64; 2],
    events: Vec<EventLabel>,
    /// Per team: target site, staging area next to it, when to leave spawn and when to push.
    attack_site: [usize; 2],
    stage: [usize; 2],
    attack_at: [usize; 2],
    execute_at: [usize; 2],
}

fn chebyshev(a: (i32, i32), b: (i32, i32)) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

impl<'a> Sim<'a> {
    fn policy(&self, team: Team) -> Policy {
        match team {
            Team::Attacker => self.cfg.attacker_policy,
            Team::Defender => self.cfg.defender_policy,
        }
    }

    fn spawn_of(&self, team: Team) -> usize {
        let atk = team == Team::Attacker;
        if atk != self.cfg.swap_spawns {
            self.map.attacker_spawn
        } else {
            self.map.defender_spawn
        }
    }

    fn frames(&self, s: f64) -> usize {
        (s * self.cfg.fps as f64).round() as usize
    }

    fn in_bounds(&self, p: (i32, i32)) -> bool {
        let pf = self.map.playfield();
        p.0 >= pf.x0 + EDGE && p.0 < pf.x1 - EDGE && p.1 >= pf.y0 + EDGE && p.1 < pf.y1 - EDGE
    }

    /// True if an icon centred at `p` keeps its distance from every other icon.
    fn free(&self, p: (i32, i32), skip_agent: Option<usize>) -> bool {
        let sep = self.cfg.min_separation;
        self.in_bounds(p)
            && self
                .agents
                .iter()
                .enumerate()
                .all(|(i, a)| !a.alive || Some(i) == skip_agent || chebyshev(a.pos, p) >= sep)
            && self.skills.iter().all(|(s, _)| chebyshev((s.x, s.y), p) >= sep)
            && self.spike.is_none_or(|s| chebyshev(s, p) >= sep)
    }

    fn area_of(&self, p: (i32, i32)) -> usize {
        self.map.nearest_area(p.0, p.1)
    }

    fn random_point(&mut self, area: usize) -> (i32, i32) {
        let r = self.map.areas[area].rect;
        let pf = self.map.playfield();
        let m = EDGE + 1;
        let x0 = (r.x0 + m).max(pf.x0 + EDGE);
        let x1 = (r.x1 - m).min(pf.x1 - EDGE - 1);
        let y0 = (r.y0 + m).max(pf.y0 + EDGE);
        let y1 = (r.y1 - m).min(pf.y1 - EDGE - 1);
        let x = x0 + self.rng.below((x1 - x0 + 1).max(1) as usize) as i32;
        let y = y0 + self.rng.below((y1 - y0 + 1).max(1) as usize) as i32;
        (x, y)
    }

    /// Random point of `area` within `STAGE_BAND` pixels of `target` when one can be found.
    fn point_near(&mut self, area: usize, target: usize) -> (i32, i32) {
        let rect = self.map.areas[target].rect;
        for _ in 0..32 {
            let p = self.random_point(area);
            if rect.distance(p.0, p.1) <= STAGE_BAND {
                return p;
            }
        }
        self.random_point(area)
    }

    /// Next area on a shortest path from `from` to `to`.
    fn next_hop(&self, from: usize, to: usize) -> usize {
        if from == to {
            return to;
        }
        let n = self.map.areas.len();
        let mut prev = vec![usize::MAX; n];
        prev[from] = from;
        let mut queue = VecDeque::from([from]);
        while let Some(a) = queue.pop_front() {
            if a == to {
                break;
            }
            for b in self.map.neighbors(a) {
                if prev[b] == usize::MAX {
                    prev[b] = a;
                    queue.push_back(b);
                }
            }
        }
        if prev[to] == usize::MAX {
            return to;
        }
        let mut cur = to;
        while prev[cur] != from {
            cur = prev[cur];
        }
        cur
    }

    fn hold(&mut self, frame: usize) -> usize {
        let (lo, hi) = self.cfg.hold_s;
        let s = self.rng.uniform_range(lo, hi);
        frame + self.frames(s)
    }

    /// Called when an agent reaches its waypoint: choose where to go next.
    fn replan(&mut self, i: usize, frame: usize) {
        let team = self.agents[i].team;
        let here = self.area_of(self.agents[i].pos);
        let mut goal = self.agents[i].goal;
        if let Some(site) = self.spike_area {
            goal = site;
        } else {
            match self.policy(team) {
                Policy::Attack => {
                    let k = team.index();
                    goal = if frame < self.attack_at[k] {
                        self.spawn_of(team)
                    } else if frame < self.execute_at[k] {
                        self.stage[k]
                    } else {
                        self.attack_site[k]
                    };
                }
                Policy::Defend => {
                    // Rotate towards a site the opponents have entered.
                    let pressed = self.map.sites.iter().copied().find(|&s| {
                        s != goal && self.agents.iter().any(|b| b.alive && b.team != team && self.area_of(b.pos) == s)
                    });
                    if let Some(s) = pressed {
                        if self.rng.bernoulli(0.5) {
                            goal = s;
                        }
                    }
                }
                Policy::Roam => {
                    if here == goal && self.rng.bernoulli(0.5) {
                        let nb = self.map.neighbors(here);
                        if !nb.is_empty() {
                            goal = nb[self.rng.below(nb.len())];
                        }
                    }
                }
            }
        }
        self.agents[i].goal = goal;
        if here == goal {
            self.agents[i].hold_until = self.hold(frame);
            let k = team.index();
            let staging = self.policy(team) == Policy::Attack && goal == self.stage[k] && frame < self.execute_at[k];
            let p = if staging { self.point_near(goal, self.attack_site[k]) } else { self.random_point(goal) };
            self.agents[i].waypoint = p;
        } else {
            let hop = self.next_hop(here, goal);
            let p = self.random_point(hop);
            self.agents[i].waypoint = p;
        }
    }

    fn step_agent(&mut self, i: usize, frame: usize) {
        let a = &self.agents[i];
        if !a.alive {
            return;
        }
        if a.resting {
            self.agents[i].resting = false;
            return;
        }
        if frame < a.hold_until {
            return;
        }
        if a.pos == a.waypoint || a.stuck >= STUCK_FRAMES {
            self.agents[i].stuck = 0;
            self.replan(i, frame);
            if frame < self.agents[i].hold_until {
                return;
            }
        }
        let a = &self.agents[i];
        let run = self.rng.bernoulli(self.traits.run_prob[a.team.index()]);
        let s = if run { 2 } else { 1 };
        let dx = (a.waypoint.0 - a.pos.0).clamp(-s, s);
        let dy = (a.waypoint.1 - a.pos.1).clamp(-s, s);
        let pos = a.pos;
        for (mx, my) in [(dx, dy), (dx, 0), (0, dy)] {
            if (mx, my) == (0, 0) {
                continue;
            }
            let p = (pos.0 + mx, pos.1 + my);
            if self.free(p, Some(i)) {
                let a = &mut self.agents[i];
                a.pos = p;
                a.stuck = 0;
                a.resting = mx.abs().max(my.abs()) >= 2;
                return;
            }
        }
        self.agents[i].stuck += 1;
    }

    fn duel_probability(&self, n_atk: usize, n_def: usize) -> f64 {
        let num = (n_atk as f64 - n_def as f64).signum();
        let di = self.info[0] - self.info[1];
        let p = self.cfg.p0 + self.cfg.delta_numbers * num + self.cfg.delta_info * (di / self.cfg.info_scale).tanh();
        p.clamp(0.0, 1.0)
    }

    fn duels(&mut self) {
        let n_areas = self.map.areas.len();
        let mut members: Vec<[Vec<usize>; 2]> = vec![Default::default(); n_areas];
        for (i, a) in self.agents.iter().enumerate() {
            if a.alive {
                members[self.area_of(a.pos)][a.team.index()].push(i);
            }
        }
        for [atk, def] in members {
            if atk.is_empty() || def.is_empty() || !self.rng.bernoulli(self.cfg.duel_hazard) {
                continue;
            }
            let a = atk[self.rng.below(atk.len())];
            let d = def[self.rng.below(def.len())];
            let p = self.duel_probability(atk.len(), def.len());
            let loser = if self.rng.bernoulli(p) { d } else { a };
            self.agents[loser].alive = false;
        }
    }

    fn label(&self, frame: usize, agent: usize, pos: (i32, i32), kind: EventKind) -> EventLabel {
        EventLabel {
            t: frame as f64 / self.cfg.fps as f64,
            team: self.agents[agent].team,
            agent: self.cfg.roster.agents[agent].name.clone(),
            area: self.map.areas[self.area_of(pos)].name.clone(),
            kind,
        }
    }

    /// Ring of candidate icon offsets around an agent, nearest rings first.
    fn ring_spots(&mut self, center: (i32, i32)) -> Vec<(i32, i32)> {
        let sep = self.cfg.min_separation;
        let mut out = Vec::new();
        for r in sep..sep + 4 {
            let mut ring: Vec<(i32, i32)> = (-r..=r)
                .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
                .filter(|&(dx, dy)| dx.abs().max(dy.abs()) == r)
                .map(|(dx, dy)| (center.0 + dx, center.1 + dy))
                .collect();
            self.rng.shuffle(&mut ring);
            out.extend(ring);
        }
        out
    }

    fn skills(&mut self, frame: usize, order: &[usize]) {
        let icon_frames = self.frames(self.cfg.skill_icon_s);
        self.skills.retain(|&(_, until)| frame < until);
        for &i in order {
            let a = &self.agents[i];
            if !a.alive || frame < a.cooldown_until {
                continue;
            }
            let (team, pos) = (a.team, a.pos);
            let threatened = self.agents.iter().any(|b| {
                b.alive && b.team != team && dist(b.pos, pos) <= self.cfg.skill_trigger_radius
            });
            if !threatened || !self.rng.bernoulli(self.traits.skill_rate[team.index()]) {
                continue;
            }
            let spot = self.ring_spots(pos).into_iter().find(|&p| self.free(p, None));
            let Some(p) = spot else { continue };
            self.skills.push((SkillIcon { agent: i, x: p.0, y: p.1 }, frame + icon_frames));
            self.agents[i].cooldown_until = frame + self.frames(self.cfg.skill_cooldown_s);
            self.info[team.index()] += self.cfg.skill_info_weight;
            let ev = self.label(frame, i, p, EventKind::SkillUse);
            self.events.push(ev);
        }
    }

    fn plant(&mut self, frame: usize, order: &[usize]) {
        if !self.cfg.spike_enabled || self.spike.is_some() || frame >= self.frames(self.cfg.plant_deadline_s) {
            return;
        }
        for &i in order {
            let a = &self.agents[i];
            if !a.alive || a.team != Team::Attacker {
                continue;
            }
            let pos = a.pos;
            let area = self.area_of(pos);
            if !self.map.sites.contains(&area) {
                continue;
            }
            let contested = self.agents.iter().any(|b| b.alive && b.team == Team::Defender && self.area_of(b.pos) == area);
            if contested || !self.rng.bernoulli(self.cfg.plant_hazard) {
                continue;
            }
            let spot = self.ring_spots(pos).into_iter().find(|&p| {
                self.area_of(p) == area
                    && self.free(p, None)
                    && self.agents.iter().enumerate().all(|(j, b)| {
                        j == i || !b.alive || b.team != Team::Attacker || dist(b.pos, p) > dist(pos, p) + 0.5
                    })
            });
            if let Some(p) = spot {
                self.spike = Some(p);
                self.spike_area = Some(area);
                self.detonate_at = frame + self.frames(self.cfg.detonation_s);
                let ev = self.label(frame, i, p, EventKind::SpikePlant);
                self.events.push(ev);
                for j in 0..self.agents.len() {
                    self.agents[j].hold_until = frame;
                    self.agents[j].stuck = STUCK_FRAMES;
                }
                return;
            }
        }
    }

    fn alive(&self, team: Team) -> usize {
        self.agents.iter().filter(|a| a.alive && a.team == team).count()
    }

    fn state(&self) -> FrameState {
        FrameState {
            agents: self.agents.iter().map(|a| a.alive.then_some(a.pos)).collect(),
            skills: self.skills.iter().map(|&(s, _)| s).collect(),
            spike: self.spike,
        }
    }
}

/// Simulate one round. Deterministic in `(cfg, seed)`.
pub fn simulate_round(cfg: &SimConfig, seed: u64) -> GroundTruth {
    simulate(cfg, seed, true)
}

/// As [`simulate_round`], optionally skipping the per-frame render state.
pub fn simulate(cfg: &SimConfig, seed: u64, record_frames: bool) -> GroundTruth {
    let map = &cfg.map;
    let mut rng = SeededRng::new(seed);
    let mut traits = TeamTraits::default();
    for t in 0..2 {
        traits.run_prob[t] = rng.uniform_range(cfg.run_prob.0, cfg.run_prob.1);
        traits.skill_rate[t] = rng.uniform_range(cfg.skill_rate.0, cfg.skill_rate.1);
    }
    let n = cfg.roster.len();
    let mut sim = Sim {
        cfg,
        map,
        rng,
        agents: Vec::with_capacity(n),
        skills: Vec::new(),
        spike: None,
        spike_area: None,
        detonate_at: usize::MAX,
        traits,
        info: [0.0; 2],
        events: Vec::new(),
        attack_site: [0; 2],
        stage: [0; 2],
        attack_at: [0; 2],
        execute_at: [0; 2],
    };
    for team in Team::ALL {
        let k = team.index();
        let site = map.sites[sim.rng.below(map.sites.len())];
        sim.attack_site[k] = site;
        let spawns = [map.attacker_spawn, map.defender_spawn];
        let stages: Vec<usize> = map.neighbors(site).into_iter().filter(|a| !spawns.contains(a) && !map.sites.contains(a)).collect();
        sim.stage[k] = if stages.is_empty() { site } else { stages[sim.rng.below(stages.len())] };
        let wait = sim.rng.uniform_range(cfg.attack_wait_s.0, cfg.attack_wait_s.1);
        sim.attack_at[k] = sim.frames(wait);
        let exec = sim.rng.uniform_range(cfg.execute_s.0, cfg.execute_s.1);
        sim.execute_at[k] = sim.frames(exec);
    }

    // Spawn in a row across the spawn area; defenders get a hold area each.
    let mut slots: [Vec<usize>; 2] = Default::default();
    for s in slots.iter_mut() {
        for k in 0..cfg.roster.len() {
            s.push(map.sites[k % map.sites.len()]);
        }
        sim.rng.shuffle(s);
    }
    let mut rank = [0usize; 2];
    for i in 0..n {
        let team = cfg.roster.team_of(i);
        let size = cfg.roster.members(team).count() as i32;
        let k = rank[team.index()];
        rank[team.index()] += 1;
        let spawn = sim.spawn_of(team);
        let r = map.areas[spawn].rect;
        let span = (r.x1 - r.x0) - 2 * (EDGE + 8);
        let pos = (r.x0 + EDGE + 8 + span * (2 * k as i32 + 1) / (2 * size), (r.y0 + r.y1) / 2);
        let goal = match sim.policy(team) {
            Policy::Defend => slots[team.index()][k % slots[team.index()].len()],
            Policy::Attack | Policy::Roam => spawn,
        };
        sim.agents.push(Agent {
            team,
            pos,
            alive: true,
            goal,
            waypoint: pos,
            hold_until: 0,
            resting: false,
            stuck: 0,
            cooldown_until: 0,
        });
    }
    let rule = FootstepRule::new(map.audible_radius, cfg.fps);
    let mut tracker = FootstepTracker::new(rule, sim.agents.iter().map(|a| a.team).collect());
    let mut frames = Vec::new();
    let first = sim.state();
    tracker.observe(0, &first.agents);
    if record_frames {
        frames.push(first);
    }

    let cap = cfg.cap_frames();
    let mut order: Vec<usize> = (0..n).collect();
    let mut end = (cap, Outcome::won_by(cfg.timeout_winner), EndReason::Timeout);
    for f in 1..cap {
        sim.rng.shuffle(&mut order);
        for &i in &order {
            sim.step_agent(i, f);
        }
        sim.duels();

        let positions: Vec<Option<(i32, i32)>> = sim.agents.iter().map(|a| a.alive.then_some(a.pos)).collect();
        for i in tracker.observe(f, &positions) {
            let team = sim.agents[i].team;
            sim.info[team.opponent().index()] += 1.0;
            let ev = sim.label(f, i, sim.agents[i].pos, EventKind::FootstepHeard);
            sim.events.push(ev);
        }
        sim.skills(f, &order);
        sim.plant(f, &order);
        if record_frames {
            frames.push(sim.state());
        }

        let (atk, def) = (sim.alive(Team::Attacker), sim.alive(Team::Defender));
        let done = if atk == 0 {
            Some((Outcome::DefenderWin, EndReason::Elimination))
        } else if def == 0 {
            Some((Outcome::AttackerWin, EndReason::Elimination))
        } else if f >= sim.detonate_at {
            Some((Outcome::AttackerWin, EndReason::Detonation))
        } else {
            None
        };
        if let Some((o, r)) = done {
            end = (f + 1, o, r);
            break;
        }
    }

    let mut events = sim.events;
    sort_events(&mut events);
    GroundTruth { seed, outcome: end.1, end: end.2, n_frames: end.0, fps: cfg.fps, traits, events, frames }
}
