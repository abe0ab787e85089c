//! Minimap geometry: named areas, HUD anchors and the agent roster.

use serde::{Deserialize, Serialize};

use crate::types::Team;

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl Rect {
    pub fn contains(&self, x: i32, y: i32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    /// Euclidean distance from a point to the rectangle (0 inside).
    pub fn distance(&self, x: i32, y: i32) -> f64 {
        let dx = (self.x0 - x).max(0).max(x - (self.x1 - 1)) as f64;
        let dy = (self.y0 - y).max(0).max(y - (self.y1 - 1)) as f64;
        (dx * dx + dy * dy).sqrt()
    }

    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub name: String,
    pub rect: Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Rows `[0, hud_height)` hold the timer / banner strip; the playfield is below.
    pub hud_height: usize,
    pub areas: Vec<Area>,
    /// Undirected area adjacency used for waypoint walks.
    pub adjacency: Vec<(usize, usize)>,
    /// Top-left corners of the four timer glyph cells: minute, colon, tens, ones.
    pub timer_anchors: [(usize, usize); 4],
    /// Top-left corner of the outcome banner.
    pub banner_anchor: (usize, usize),
    /// Footstep audible radius in pixels.
    pub audible_radius: f64,
    pub attacker_spawn: usize,
    pub defender_spawn: usize,
    pub sites: Vec<usize>,
}

impl MapSpec {
    /// Default six-area layout on a 128×128 frame: two spawns, two sites, mid and a connector.
    pub fn split6() -> Self {
        let r = |x0, y0, x1, y1| Rect { x0, y0, x1, y1 };
        let area = |name: &str, rect| Area { name: name.to_string(), rect };
        Self {
            id: "split6".into(),
            width: 128,
            height: 128,
            hud_height: 14,
            areas: vec![
                area("def_spawn", r(0, 14, 128, 38)),
                area("site_a", r(0, 38, 42, 69)),
                area("connector", r(0, 69, 42, 100)),
                area("mid", r(42, 38, 86, 100)),
                area("site_b", r(86, 38, 128, 100)),
                area("atk_spawn", r(0, 100, 128, 128)),
            ],
            adjacency: vec![(0, 1), (0, 3), (0, 4), (1, 2), (1, 3), (2, 3), (2, 5), (3, 5), (3, 4), (4, 5)],
            timer_anchors: [(50, 2), (57, 2), (62, 2), (69, 2)],
            banner_anchor: (40, 2),
            audible_radius: 30.0,
            attacker_spawn: 5,
            defender_spawn: 0,
            sites: vec![1, 4],
        }
    }

    pub fn playfield(&self) -> Rect {
        Rect { x0: 0, y0: self.hud_height as i32, x1: self.width as i32, y1: self.height as i32 }
    }

    pub fn area_at(&self, x: i32, y: i32) -> Option<usize> {
        self.areas.iter().position(|a| a.rect.contains(x, y))
    }

    /// Containing area, or the closest one for off-map points.
    pub fn nearest_area(&self, x: i32, y: i32) -> usize {
        self.area_at(x, y).unwrap_or_else(|| {
            let mut best = (f64::INFINITY, 0);
            for (i, a) in self.areas.iter().enumerate() {
                let d = a.rect.distance(x, y);
                if d < best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
    }

    pub fn area_index(&self, name: &str) -> Option<usize> {
        self.areas.iter().position(|a| a.name == name)
    }

    pub fn neighbors(&self, area: usize) -> Vec<usize> {
        self.adjacency
            .iter()
            .filter_map(|&(a, b)| if a == area { Some(b) } else if b == area { Some(a) } else { None })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub team: Team,
}

/// Fixed ten-agent roster; agent `i` always uses glyph `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub agents: Vec<AgentSpec>,
}

impl Default for Roster {
    fn default() -> Self {
        let atk = ["Ash", "Birch", "Cedar", "Dune", "Ember"];
        let def = ["Frost", "Gale", "Haze", "Iris", "Jade"];
        let agents = atk
            .iter()
            .map(|n| AgentSpec { name: n.to_string(), team: Team::Attacker })
            .chain(def.iter().map(|n| AgentSpec { name: n.to_string(), team: Team::Defender }))
            .collect();
        Self { agents }
    }
}

impl Roster {
    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.name == name)
    }

    pub fn team_of(&self, agent: usize) -> Team {
        self.agents[agent].team
    }

    pub fn members(&self, team: Team) -> impl Iterator<Item = usize> + '_ {
        self.agents.iter().enumerate().filter(move |(_, a)| a.team == team).map(|(i, _)| i)
    }
}
