use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{MapSpec, Roster};
use crate::types::Team;

/// Movement behaviour of a team.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Leave spawn, stage next to a chosen site, then push it.
    Attack,
    /// Hold the sites and rotate towards one the opponents have entered.
    Defend,
    /// Random walk over adjacent areas.
    Roam,
}

/// Simulator parameters. Per-round hidden traits (how often a team's agents
/// run, how eagerly they use skills) are drawn from the ranges below; running
/// is what makes footsteps audible, and the information a team gathers from
/// heard footsteps and its own skills tilts its duels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub map: MapSpec,
    pub roster: Roster,
    pub fps: usize,
    pub round_cap_s: usize,
    /// Timer-less frames before the clock starts in each round video.
    pub lead_in_frames: usize,
    /// Banner frames after the round ends.
    pub banner_frames: usize,
    /// Attacker duel win probability with no advantage.
    pub p0: f64,
    /// Bonus for having more agents in the contested area.
    pub delta_numbers: f64,
    /// Maximum bonus from information advantage, reached through `tanh(ΔI / info_scale)`.
    pub delta_info: f64,
    pub info_scale: f64,
    /// Weight of a team's own skill use in its information count.
    pub skill_info_weight: f64,
    /// Per-frame probability that a contested area produces a duel.
    pub duel_hazard: f64,
    /// Range of the per-team probability that a moving agent runs a step.
    pub run_prob: (f64, f64),
    /// Range of the per-team per-frame skill probability while an enemy is close.
    pub skill_rate: (f64, f64),
    pub skill_trigger_radius: f64,
    pub skill_cooldown_s: f64,
    pub skill_icon_s: f64,
    pub spike_enabled: bool,
    /// Per-frame plant probability for an attacker on an undefended site.
    pub plant_hazard: f64,
    pub plant_deadline_s: f64,
    pub detonation_s: f64,
    pub attacker_policy: Policy,
    pub defender_policy: Policy,
    /// Team that wins when the clock runs out.
    pub timeout_winner: Team,
    /// Start attackers in the defender spawn and vice versa.
    pub swap_spawns: bool,
    /// Range of pauses at waypoints, seconds.
    pub hold_s: (f64, f64),
    /// Range of the attackers' initial wait in spawn, seconds.
    pub attack_wait_s: (f64, f64),
    /// Range of the time attackers stop staging and push their site, seconds.
    pub execute_s: (f64, f64),
    /// Minimum Chebyshev distance between icon centres.
    pub min_separation: i32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            map: MapSpec::split6(),
            roster: Roster::default(),
            fps: 8,
            round_cap_s: 100,
            lead_in_frames: 8,
            banner_frames: 16,
            p0: 0.5,
            delta_numbers: 0.05,
            delta_info: 0.4,
            info_scale: 4.0,
            skill_info_weight: 0.5,
            duel_hazard: 0.08,
            run_prob: (0.02, 0.8),
            skill_rate: (0.002, 0.012),
            skill_trigger_radius: 40.0,
            skill_cooldown_s: 12.0,
            skill_icon_s: 3.0,
            spike_enabled: true,
            plant_hazard: 0.03,
            plant_deadline_s: 70.0,
            detonation_s: 25.0,
            attacker_policy: Policy::Attack,
            defender_policy: Policy::Defend,
            timeout_winner: Team::Defender,
            swap_spawns: false,
            hold_s: (0.5, 2.5),
            attack_wait_s: (2.0, 8.0),
            execute_s: (25.0, 60.0),
            min_separation: 10,
        }
    }
}

impl SimConfig {
    /// No duel bonuses and no spike: every duel is a fair coin.
    pub fn neutral() -> Self {
        Self { delta_numbers: 0.0, delta_info: 0.0, spike_enabled: false, ..Self::default() }
    }

    /// The same configuration with the two teams' roles exchanged.
    pub fn mirrored(&self) -> Self {
        Self {
            p0: 1.0 - self.p0,
            attacker_policy: self.defender_policy,
            defender_policy: self.attacker_policy,
            timeout_winner: self.timeout_winner.opponent(),
            swap_spawns: !self.swap_spawns,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return bad("p0 must lie in (0, 1)");
        }
        let bonus = self.delta_numbers.abs() + self.delta_info.abs();
        if self.p0 + bonus > 1.0 || self.p0 - bonus < 0.0 {
            return bad("p0 ± (delta_numbers + delta_info) must stay within [0, 1]");
        }
        if self.round_cap_s == 0 || self.round_cap_s > 100 {
            return bad("round_cap_s must lie in 1..=100");
        }
        if self.fps == 0 {
            return bad("fps must be positive");
        }
        if self.spike_enabled && self.plant_deadline_s + self.detonation_s > self.round_cap_s as f64 {
            return bad("plant deadline plus detonation time must fit in the round cap");
        }
        if self.run_prob.0 > self.run_prob.1 || self.skill_rate.0 > self.skill_rate.1 || self.hold_s.0 > self.hold_s.1 {
            return bad("ranges must be (low, high)");
        }
        if self.roster.members(Team::Attacker).count() == 0 || self.roster.members(Team::Defender).count() == 0 {
            return bad("each team needs at least one agent");
        }
        if self.min_separation < super::render::ICON_SIZE as i32 + 1 {
            return bad("min_separation must keep icons from touching");
        }
        Ok(())
    }

    pub fn cap_frames(&self) -> usize {
        self.round_cap_s * self.fps
    }
}
