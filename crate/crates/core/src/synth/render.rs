//! Drawing simulator state as minimap frames.

use crate::image::FrameImage;
use crate::map::{MapSpec, Roster};
use crate::rng::SeededRng;
use crate::types::{Outcome, Team};
use crate::vision::glyphs::{self, palette, IconSet};

use super::config::SimConfig;
use super::sim::{FrameState, GroundTruth};

pub const ICON_SIZE: usize = glyphs::ICON;

/// What the HUD strip shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hud {
    Blank,
    Timer(u32),
    Banner(Outcome),
}

/// Pre-drawn background and icons for one map and roster.
#[derive(Clone, Debug)]
pub struct Renderer {
    pub map: MapSpec,
    base: FrameImage,
    agents: Vec<FrameImage>,
    skills: Vec<FrameImage>,
    spike: FrameImage,
}

fn background(map: &MapSpec) -> FrameImage {
    let mut img = FrameImage::filled(map.width, map.height, palette::HUD);
    let area = |x: usize, y: usize| map.area_at(x as i32, y as i32);
    for y in map.hud_height..map.height {
        for x in 0..map.width {
            let a = area(x, y);
            let edge = (x + 1 < map.width && area(x + 1, y) != a) || (y + 1 < map.height && area(x, y + 1) != a);
            let c = match a {
                _ if edge => palette::BOUNDARY,
                Some(i) => palette::AREA_FILLS[i % palette::AREA_FILLS.len()],
                None => palette::HUD,
            };
            img.put(x, y, c);
        }
    }
    img
}

impl Renderer {
    pub fn new(map: &MapSpec, roster: &Roster) -> Self {
        let teams: Vec<Team> = roster.agents.iter().map(|a| a.team).collect();
        let icons = IconSet::new(&teams);
        Self {
            map: map.clone(),
            base: background(map),
            agents: (0..teams.len()).map(|a| icons.agent_icon(a)).collect(),
            skills: (0..teams.len()).map(|a| icons.skill_icon(a)).collect(),
            spike: glyphs::spike_icon(),
        }
    }

    fn place(&self, img: &mut FrameImage, icon: &FrameImage, (x, y): (i32, i32)) {
        let h = (ICON_SIZE / 2) as i32;
        let (x0, y0) = (x - h, y - h);
        assert!(
            x0 >= 0 && y0 >= self.map.hud_height as i32 && x0 as usize + ICON_SIZE <= img.width && y0 as usize + ICON_SIZE <= img.height,
            "icon at ({x}, {y}) leaves the playfield"
        );
        glyphs::blit(img, icon, x0 as usize, y0 as usize);
    }

    /// One frame: background, skill effects, spike, agents, then the HUD.
    pub fn frame(&self, state: Option<&FrameState>, hud: Hud) -> FrameImage {
        let mut img = self.base.clone();
        if let Some(st) = state {
            for s in &st.skills {
                self.place(&mut img, &self.skills[s.agent], (s.x, s.y));
            }
            if let Some(p) = st.spike {
                self.place(&mut img, &self.spike, p);
            }
            for (a, p) in st.agents.iter().enumerate() {
                if let Some(p) = *p {
                    self.place(&mut img, &self.agents[a], p);
                }
            }
        }
        match hud {
            Hud::Blank => {}
            Hud::Timer(s) => glyphs::draw_timer(&mut img, &self.map.timer_anchors, s),
            Hud::Banner(o) => glyphs::draw_banner(&mut img, self.map.banner_anchor.0, self.map.banner_anchor.1, o),
        }
        img
    }

    /// Round frame `f` with its countdown.
    pub fn round_frame(&self, gt: &GroundTruth, cfg: &SimConfig, f: usize) -> FrameImage {
        self.frame(Some(&gt.frames[f]), Hud::Timer(timer_at(cfg, f)))
    }

    /// Frame `k` of the round's video: lead-in, the round itself, then the banner.
    pub fn video_frame(&self, gt: &GroundTruth, cfg: &SimConfig, k: usize) -> FrameImage {
        let lead = cfg.lead_in_frames;
        if k < lead {
            self.frame(None, Hud::Blank)
        } else if k < lead + gt.n_frames {
            self.round_frame(gt, cfg, k - lead)
        } else {
            self.frame(None, Hud::Banner(gt.outcome))
        }
    }
}

/// Remaining seconds shown at round frame `f`.
pub fn timer_at(cfg: &SimConfig, f: usize) -> u32 {
    (cfg.round_cap_s - f / cfg.fps) as u32
}

pub fn video_len(gt: &GroundTruth, cfg: &SimConfig) -> usize {
    cfg.lead_in_frames + gt.n_frames + cfg.banner_frames
}

/// Render one frame from scratch; a pure function of its inputs.
pub fn render_frame(state: &FrameState, timer: Option<u32>, map: &MapSpec, roster: &Roster) -> FrameImage {
    Renderer::new(map, roster).frame(Some(state), timer.map_or(Hud::Blank, Hud::Timer))
}

/// Add i.i.d. Gaussian noise of `sigma` (in 0–255 units) to every channel.
pub fn add_pixel_noise(img: &mut FrameImage, sigma: f64, rng: &mut SeededRng) {
    for v in img.rgb.iter_mut() {
        *v = (*v as f64 + rng.normal(0.0, sigma)).round().clamp(0.0, 255.0) as u8;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_state_is_background_plus_timer() {
        let map = MapSpec::split6();
        let roster = Roster::default();
        let st = FrameState { agents: vec![None; 10], ..Default::default() };
        let img = render_frame(&st, Some(100), &map, &roster);
        let mut expect = background(&map);
        glyphs::draw_timer(&mut expect, &map.timer_anchors, 100);
        assert_eq!(img, expect);
    }
}
