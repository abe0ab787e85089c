//! Reading the HUD strip: the `M:SS` round timer and the outcome banner.

use crate::image::{FrameImage, GrayImage};
use crate::map::MapSpec;
use crate::types::Outcome;

use super::glyphs::{self, palette, BANNER_H, BANNER_W};
use super::ncc::PreparedTemplate;

/// Prepared digit, colon and banner templates for one map layout.
#[derive(Clone, Debug)]
pub struct HudReader {
    digits: Vec<PreparedTemplate>,
    colon: PreparedTemplate,
    banners: [(Outcome, PreparedTemplate); 2],
    anchors: [(usize, usize); 4],
    banner_anchor: (usize, usize),
    threshold: f64,
}

fn template(bm: &glyphs::Bitmap) -> PreparedTemplate {
    let mut img = FrameImage::filled(bm.width, bm.height, palette::HUD);
    bm.draw(&mut img, 0, 0, palette::DIGIT, None);
    PreparedTemplate::new(&img.gray())
}

fn banner_template(outcome: Outcome) -> PreparedTemplate {
    let mut img = FrameImage::new(BANNER_W, BANNER_H);
    glyphs::draw_banner(&mut img, 0, 0, outcome);
    PreparedTemplate::new(&img.gray())
}

impl HudReader {
    pub fn new(map: &MapSpec, threshold: f64) -> Self {
        Self {
            digits: (0..10).map(|d| template(&glyphs::digit(d))).collect(),
            colon: template(&glyphs::colon()),
            banners: [
                (Outcome::AttackerWin, banner_template(Outcome::AttackerWin)),
                (Outcome::DefenderWin, banner_template(Outcome::DefenderWin)),
            ],
            anchors: map.timer_anchors,
            banner_anchor: map.banner_anchor,
            threshold,
        }
    }

    /// Remaining seconds, or `None` (no timer) when any glyph scores below threshold.
    pub fn read_timer(&self, img: &GrayImage) -> Option<u32> {
        let mut cells = [0u32; 4];
        for (i, &(x, y)) in self.anchors.iter().enumerate() {
            if i == 1 {
                let (s, _) = self.colon.score_at(img, x, y);
                if s < self.threshold {
                    return None;
                }
                continue;
            }
            let (d, s) = self
                .digits
                .iter()
                .enumerate()
                .map(|(d, t)| (d, t.score_at(img, x, y).0))
                .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
            if s < self.threshold {
                return None;
            }
            cells[i] = d as u32;
        }
        Some(cells[0] * 60 + cells[2] * 10 + cells[3])
    }

    pub fn read_banner(&self, img: &GrayImage) -> Option<Outcome> {
        let (x, y) = self.banner_anchor;
        let (outcome, score) = self
            .banners
            .iter()
            .map(|(o, t)| (*o, t.score_at(img, x, y).0))
            .fold((Outcome::DefenderWin, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        (score >= self.threshold).then_some(outcome)
    }
}

/// One-shot timer read with the default 0.8 threshold.
pub fn read_timer(frame: &FrameImage, map: &MapSpec) -> Option<u32> {
    HudReader::new(map, 0.8).read_timer(&frame.gray())
}
