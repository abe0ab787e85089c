//! Built-in bitmaps: seven-segment timer digits, outcome banners, agent,
//! skill-effect and spike icons. The renderer draws them and the detector
//! matches against their grayscale templates.

use crate::image::{FrameImage, GrayImage};
use crate::rng::SeededRng;
use crate::types::{Outcome, Team};

pub const DIGIT_W: usize = 5;
pub const DIGIT_H: usize = 9;
pub const COLON_W: usize = 3;
pub const ICON: usize = 9;
pub const BANNER_W: usize = 40;
pub const BANNER_H: usize = 10;

pub mod palette {
    pub const HUD: [u8; 3] = [16, 16, 22];
    pub const DIGIT: [u8; 3] = [235, 235, 235];
    pub const BOUNDARY: [u8; 3] = [92, 92, 92];
    pub const AREA_FILLS: [[u8; 3]; 6] =
        [[38, 42, 50], [52, 50, 44], [44, 50, 46], [48, 46, 52], [52, 44, 48], [42, 48, 50]];
    pub const ATTACKER: [u8; 3] = [232, 78, 60];
    pub const DEFENDER: [u8; 3] = [58, 140, 236];
    pub const SKILL: [u8; 3] = [246, 214, 64];
    pub const SPIKE: [u8; 3] = [255, 146, 0];
    pub const GLYPH_ON: [u8; 3] = [250, 250, 250];
    pub const GLYPH_OFF: [u8; 3] = [22, 22, 22];
}

/// Seven-segment layout in a 5×9 cell: a (top), b, c (right), d (bottom), e, f (left), g (middle).
const SEGMENTS: [u8; 10] = [
    0b0111111, // 0: abcdef
    0b0000110, // 1: bc
    0b1011011, // 2: abdeg
    0b1001111, // 3: abcdg
    0b1100110, // 4: bcfg
    0b1101101, // 5: acdfg
    0b1111101, // 6: acdefg
    0b0000111, // 7: abc
    0b1111111, // 8
    0b1101111, // 9: abcdfg
];

/// Boolean bitmap, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bitmap {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Bitmap {
    fn blank(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    fn set(&mut self, x: usize, y: usize) {
        self.bits[y * self.width + x] = true;
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    fn from_rows(rows: &[&str]) -> Self {
        let mut b = Self::blank(rows[0].len(), rows.len());
        for (y, row) in rows.iter().enumerate() {
            for (x, c) in row.bytes().enumerate() {
                if c == b'#' {
                    b.set(x, y);
                }
            }
        }
        b
    }

    /// Paint `on` where set and `off` elsewhere, top-left at `(x0, y0)`.
    pub fn draw(&self, img: &mut FrameImage, x0: usize, y0: usize, on: [u8; 3], off: Option<[u8; 3]>) {
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    img.put(x0 + x, y0 + y, on);
                } else if let Some(c) = off {
                    img.put(x0 + x, y0 + y, c);
                }
            }
        }
    }
}

pub fn digit(d: usize) -> Bitmap {
    let seg = SEGMENTS[d];
    let mut b = Bitmap::blank(DIGIT_W, DIGIT_H);
    let on = |i: u8| seg & (1 << i) != 0;
    for x in 1..4 {
        if on(0) {
            b.set(x, 0);
        }
        if on(6) {
            b.set(x, 4);
        }
        if on(3) {
            b.set(x, 8);
        }
    }
    for y in 1..4 {
        if on(5) {
            b.set(0, y);
        }
        if on(1) {
            b.set(4, y);
        }
    }
    for y in 5..8 {
        if on(4) {
            b.set(0, y);
        }
        if on(2) {
            b.set(4, y);
        }
    }
    b
}

pub fn colon() -> Bitmap {
    let mut b = Bitmap::blank(COLON_W, DIGIT_H);
    for y in [2, 3, 5, 6] {
        b.set(1, y);
    }
    b
}

fn letter(c: char) -> Bitmap {
    let rows: [&str; 7] = match c {
        'A' => [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"],
        'T' => ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."],
        'K' => ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"],
        'D' => ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."],
        'E' => ["#####", "#....", "#....", "####.", "#....", "#....", "#####"],
        'F' => ["#####", "#....", "#....", "####.", "#....", "#....", "#...."],
        _ => unreachable!("banner alphabet"),
    };
    Bitmap::from_rows(&rows)
}

/// Outcome banner: the winning side's code in white on its team colour.
pub fn draw_banner(img: &mut FrameImage, x0: usize, y0: usize, outcome: Outcome) {
    let (text, fill) = match outcome.winner() {
        Team::Attacker => ("ATK", palette::ATTACKER),
        Team::Defender => ("DEF", palette::DEFENDER),
    };
    img.fill_rect(x0, y0, BANNER_W, BANNER_H, fill);
    for (i, c) in text.chars().enumerate() {
        letter(c).draw(img, x0 + 9 + 8 * i, y0 + 1, palette::DIGIT, None);
    }
    // Underline bar distinguishes the banners further in grayscale.
    let bar_x = if outcome == Outcome::AttackerWin { x0 + 2 } else { x0 + BANNER_W - 8 };
    img.fill_rect(bar_x, y0 + 8, 6, 1, palette::DIGIT);
}

/// Timer text `M:SS` for a remaining-seconds value.
pub fn draw_timer(img: &mut FrameImage, anchors: &[(usize, usize); 4], seconds: u32) {
    let cells = [(seconds / 60) % 10, 0, (seconds % 60) / 10, seconds % 10];
    for (i, &(x, y)) in anchors.iter().enumerate() {
        let bm = if i == 1 { colon() } else { digit(cells[i] as usize) };
        bm.draw(img, x, y, palette::DIGIT, Some(palette::HUD));
    }
}

/// Per-agent 7×7 interior glyphs, generated from a fixed seed and kept
/// mutually dissimilar so that grayscale NCC separates every icon.
#[derive(Clone, Debug)]
pub struct IconSet {
    pub agent_glyphs: Vec<Bitmap>,
    pub teams: Vec<Team>,
}

const GLYPH_SEED: u64 = 0x6d69_6e69_6d61_70;
const MAX_PAIR_NCC: f64 = 0.55;

impl IconSet {
    pub fn new(teams: &[Team]) -> Self {
        let mut rng = SeededRng::new(GLYPH_SEED);
        let mut set = Self { agent_glyphs: Vec::new(), teams: Vec::new() };
        let mut templates: Vec<GrayImage> = vec![spike_icon().gray()];
        for &team in teams {
            loop {
                let mut g = Bitmap::blank(7, 7);
                for i in 0..49 {
                    g.bits[i] = rng.bernoulli(0.5);
                }
                let ones = g.bits.iter().filter(|&&b| b).count();
                if !(18..=31).contains(&ones) {
                    continue;
                }
                let a = icon_image(&g, team_color(team), false).gray();
                let s = icon_image(&g, palette::SKILL, true).gray();
                let ok = templates.iter().all(|t| {
                    super::ncc::ncc_at(t, &a, 0, 0).0.abs() < MAX_PAIR_NCC
                        && super::ncc::ncc_at(t, &s, 0, 0).0.abs() < MAX_PAIR_NCC
                }) && super::ncc::ncc_at(&a, &s, 0, 0).0 < MAX_PAIR_NCC;
                if ok {
                    templates.push(a);
                    templates.push(s);
                    set.agent_glyphs.push(g);
                    set.teams.push(team);
                    break;
                }
            }
        }
        set
    }

    pub fn agent_icon(&self, agent: usize) -> FrameImage {
        icon_image(&self.agent_glyphs[agent], team_color(self.teams[agent]), false)
    }

    /// Skill-effect icon of `agent`: its glyph inverted inside a skill-coloured frame.
    pub fn skill_icon(&self, agent: usize) -> FrameImage {
        icon_image(&self.agent_glyphs[agent], palette::SKILL, true)
    }
}

pub fn team_color(team: Team) -> [u8; 3] {
    match team {
        Team::Attacker => palette::ATTACKER,
        Team::Defender => palette::DEFENDER,
    }
}

fn icon_image(glyph: &Bitmap, border: [u8; 3], inverted: bool) -> FrameImage {
    let mut img = FrameImage::filled(ICON, ICON, border);
    let (on, off) = if inverted {
        (palette::GLYPH_OFF, palette::GLYPH_ON)
    } else {
        (palette::GLYPH_ON, palette::GLYPH_OFF)
    };
    glyph.draw(&mut img, 1, 1, on, Some(off));
    img
}

pub fn spike_icon() -> FrameImage {
    let rows = [
        "...#...", "..###..", ".##.##.", "##...##", ".##.##.", "..###..", "...#...",
    ];
    let mut img = FrameImage::filled(ICON, ICON, palette::SPIKE);
    Bitmap::from_rows(&rows).draw(&mut img, 1, 1, palette::SPIKE, Some(palette::GLYPH_OFF));
    img
}

/// Copy a small image onto `dst` with its top-left corner at `(x0, y0)`.
pub fn blit(dst: &mut FrameImage, src: &FrameImage, x0: usize, y0: usize) {
    for y in 0..src.height {
        let d = ((y0 + y) * dst.width + x0) * 3;
        let s = y * src.width * 3;
        dst.rgb[d..d + src.width * 3].copy_from_slice(&src.rgb[s..s + src.width * 3]);
    }
}
