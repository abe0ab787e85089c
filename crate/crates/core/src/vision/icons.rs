//! Agent, skill-effect and spike icon detection by NCC with non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::image::{FrameImage, GrayImage};
use crate::map::MapSpec;
use crate::types::Team;

use super::glyphs::{self, IconSet, ICON};
use super::ncc::PreparedTemplate;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IconKind {
    Agent,
    Skill,
    Spike,
}

/// One detected icon. `x, y` is the icon centre.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub kind: IconKind,
    /// Roster index; `None` for the spike.
    pub agent: Option<usize>,
    pub team: Option<Team>,
    pub x: i32,
    pub y: i32,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub threshold: f64,
    /// Suppression radius (Chebyshev, pixels); defaults to the template size.
    pub nms_radius: usize,
    /// Only score windows next to saturated icon-frame corners instead of every offset.
    pub prune: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { threshold: 0.8, nms_radius: ICON, prune: true }
    }
}

#[derive(Clone, Debug)]
struct Entry {
    kind: IconKind,
    agent: Option<usize>,
    team: Option<Team>,
    template: PreparedTemplate,
}

/// Prepared templates for a roster.
#[derive(Clone, Debug)]
pub struct IconTemplates {
    entries: Vec<Entry>,
}

impl IconTemplates {
    pub fn new(icons: &IconSet) -> Self {
        let mut entries = Vec::new();
        for a in 0..icons.agent_glyphs.len() {
            let team = Some(icons.teams[a]);
            entries.push(Entry {
                kind: IconKind::Agent,
                agent: Some(a),
                team,
                template: PreparedTemplate::new(&icons.agent_icon(a).gray()),
            });
            entries.push(Entry {
                kind: IconKind::Skill,
                agent: Some(a),
                team,
                template: PreparedTemplate::new(&icons.skill_icon(a).gray()),
            });
        }
        entries.push(Entry {
            kind: IconKind::Spike,
            agent: None,
            team: None,
            template: PreparedTemplate::new(&glyphs::spike_icon().gray()),
        });
        Self { entries }
    }
}

fn saturated(img: &FrameImage, x: usize, y: usize) -> bool {
    let [r, g, b] = img.get(x, y);
    r.max(g).max(b) - r.min(g).min(b) >= 100
}

/// Top-left icon corners: saturated pixels with unsaturated left/top neighbours
/// and saturated right/bottom neighbours.
fn corner_candidates(img: &FrameImage, y0: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in y0..img.height - 1 {
        for x in 0..img.width - 1 {
            if saturated(img, x, y)
                && saturated(img, x + 1, y)
                && saturated(img, x, y + 1)
                && (x == 0 || !saturated(img, x - 1, y))
                && (y == y0 || !saturated(img, x, y - 1))
            {
                out.push((x, y));
            }
        }
    }
    out
}

/// All icons in the playfield of one frame, strongest first after suppression.
pub fn detect_icons(
    frame: &FrameImage,
    gray: &GrayImage,
    map: &MapSpec,
    templates: &IconTemplates,
    cfg: &DetectConfig,
) -> Vec<Detection> {
    let y0 = map.hud_height;
    let (max_x, max_y) = (frame.width - ICON, frame.height - ICON);
    let mut hits = Vec::new();
    let consider = |x: usize, y: usize, hits: &mut Vec<Detection>| {
        for e in &templates.entries {
            let (score, degenerate) = e.template.score_at(gray, x, y);
            if !degenerate && score >= cfg.threshold {
                hits.push(Detection {
                    kind: e.kind,
                    agent: e.agent,
                    team: e.team,
                    x: (x + ICON / 2) as i32,
                    y: (y + ICON / 2) as i32,
                    score,
                });
            }
        }
    };
    if cfg.prune {
        let mut seen = std::collections::HashSet::new();
        for (cx, cy) in corner_candidates(frame, y0) {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (x, y) = (cx as i64 + dx, cy as i64 + dy);
                    if x < 0 || y < y0 as i64 || x > max_x as i64 || y > max_y as i64 {
                        continue;
                    }
                    if seen.insert((x, y)) {
                        consider(x as usize, y as usize, &mut hits);
                    }
                }
            }
        }
    } else {
        for y in y0..=max_y {
            for x in 0..=max_x {
                consider(x, y, &mut hits);
            }
        }
    }
    non_max_suppression(hits, cfg.nms_radius)
}

/// Greedy NMS: keep the highest score, drop anything within `radius` (Chebyshev, exclusive).
pub fn non_max_suppression(mut hits: Vec<Detection>, radius: usize) -> Vec<Detection> {
    hits.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(a.agent.cmp(&b.agent))
    });
    let mut kept: Vec<Detection> = Vec::new();
    for h in hits {
        let clash = kept.iter().any(|k| (k.x - h.x).abs().max((k.y - h.y).abs()) < radius as i32);
        if !clash {
            kept.push(h);
        }
    }
    kept
}
