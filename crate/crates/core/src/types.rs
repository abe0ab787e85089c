//! Small domain enums shared across the pipeline.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Team {
    #[serde(rename = "ATK")]
    Attacker,
    #[serde(rename = "DEF")]
    Defender,
}

impl Team {
    pub const ALL: [Team; 2] = [Team::Attacker, Team::Defender];

    pub fn opponent(self) -> Team {
        match self {
            Team::Attacker => Team::Defender,
            Team::Defender => Team::Attacker,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Team::Attacker => 0,
            Team::Defender => 1,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Team::Attacker => "ATK",
            Team::Defender => "DEF",
        }
    }
}

/// Round result. Class index 0 is an attacker win, 1 a defender win.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AttackerWin,
    DefenderWin,
}

impl Outcome {
    pub fn class_index(self) -> usize {
        match self {
            Outcome::AttackerWin => 0,
            Outcome::DefenderWin => 1,
        }
    }

    pub fn from_class(c: usize) -> Outcome {
        if c == 0 {
            Outcome::AttackerWin
        } else {
            Outcome::DefenderWin
        }
    }

    pub fn winner(self) -> Team {
        match self {
            Outcome::AttackerWin => Team::Attacker,
            Outcome::DefenderWin => Team::Defender,
        }
    }

    pub fn won_by(team: Team) -> Outcome {
        match team {
            Team::Attacker => Outcome::AttackerWin,
            Team::Defender => Outcome::DefenderWin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SkillUse,
    FootstepHeard,
    SpikePlant,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::SkillUse, EventKind::FootstepHeard, EventKind::SpikePlant];

    pub fn index(self) -> usize {
        match self {
            EventKind::SkillUse => 0,
            EventKind::FootstepHeard => 1,
            EventKind::SpikePlant => 2,
        }
    }
}
