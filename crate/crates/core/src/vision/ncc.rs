//! Normalized cross-correlation template matching on grayscale images.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Axis-aligned search window in image pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn whole(img: &GrayImage) -> Self {
        Self { x: 0, y: 0, width: img.width, height: img.height }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NccMatch {
    /// Top-left corner of the best window.
    pub x: usize,
    pub y: usize,
    pub score: f64,
    /// The best window (or the template) had zero variance; its score is 0.
    pub degenerate: bool,
}

/// Centered template with its squared norm, reusable across many windows.
#[derive(Clone, Debug)]
pub struct PreparedTemplate {
    pub width: usize,
    pub height: usize,
    centered: Vec<f64>,
    norm_sq: f64,
}

const FLAT: f64 = 1e-9;

impl PreparedTemplate {
    pub fn new(t: &GrayImage) -> Self {
        let n = t.data.len() as f64;
        let mean = t.data.iter().sum::<f64>() / n;
        let centered: Vec<f64> = t.data.iter().map(|v| v - mean).collect();
        let norm_sq = centered.iter().map(|v| v * v).sum();
        Self { width: t.width, height: t.height, centered, norm_sq }
    }

    pub fn is_flat(&self) -> bool {
        self.norm_sq <= FLAT * self.centered.len() as f64
    }

    /// Score at top-left `(x, y)`; the window must lie inside `img`.
    pub fn score_at(&self, img: &GrayImage, x: usize, y: usize) -> (f64, bool) {
        let n = (self.width * self.height) as f64;
        let mut sum = 0.0;
        for r in 0..self.height {
            let row = &img.data[(y + r) * img.width + x..][..self.width];
            sum += row.iter().sum::<f64>();
        }
        let mean = sum / n;
        let (mut cross, mut var) = (0.0, 0.0);
        for r in 0..self.height {
            let row = &img.data[(y + r) * img.width + x..][..self.width];
            let tr = &self.centered[r * self.width..][..self.width];
            for (i, t) in row.iter().zip(tr) {
                let c = i - mean;
                cross += t * c;
                var += c * c;
            }
        }
        if self.is_flat() || var <= FLAT * n * (1.0 + mean * mean) {
            return (0.0, true);
        }
        ((cross / (self.norm_sq * var).sqrt()).clamp(-1.0, 1.0), false)
    }
}

/// Score of `template` placed with its top-left corner at `(x, y)`.
pub fn ncc_at(template: &GrayImage, img: &GrayImage, x: usize, y: usize) -> (f64, bool) {
    PreparedTemplate::new(template).score_at(img, x, y)
}

/// Best-scoring placement of `template` fully inside `region` (ties keep the
/// first offset in row-major order).
pub fn ncc_match(template: &GrayImage, img: &GrayImage, region: Region) -> Result<NccMatch> {
    let region = clip_region(region, img);
    if template.width > region.width || template.height > region.height {
        return Err(Error::TemplateLargerThanRegion {
            template: (template.width, template.height),
            region: (region.width, region.height),
        });
    }
    let prepared = PreparedTemplate::new(template);
    let mut best = NccMatch { x: region.x, y: region.y, score: f64::NEG_INFINITY, degenerate: true };
    for y in region.y..=region.y + region.height - template.height {
        for x in region.x..=region.x + region.width - template.width {
            let (score, degenerate) = prepared.score_at(img, x, y);
            if score > best.score {
                best = NccMatch { x, y, score, degenerate };
            }
        }
    }
    Ok(best)
}

fn clip_region(r: Region, img: &GrayImage) -> Region {
    let x = r.x.min(img.width);
    let y = r.y.min(img.height);
    Region { x, y, width: r.width.min(img.width - x), height: r.height.min(img.height - y) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn random(w: usize, h: usize, rng: &mut SeededRng) -> GrayImage {
        GrayImage::new(w, h, (0..w * h).map(|_| rng.uniform_range(0.0, 255.0)).collect())
    }

    fn crop(img: &GrayImage, x: usize, y: usize, w: usize, h: usize) -> GrayImage {
        let mut d = Vec::with_capacity(w * h);
        for r in 0..h {
            d.extend_from_slice(&img.data[(y + r) * img.width + x..][..w]);
        }
        GrayImage::new(w, h, d)
    }

    #[test]
    fn exact_sub_image_scores_one() {
        let mut rng = SeededRng::new(1);
        let img = random(20, 16, &mut rng);
        let t = crop(&img, 7, 5, 6, 4);
        let m = ncc_match(&t, &img, Region::whole(&img)).unwrap();
        assert_eq!((m.x, m.y), (7, 5));
        assert!((m.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_scores_minus_one() {
        let mut rng = SeededRng::new(2);
        let t = random(5, 5, &mut rng);
        let neg = GrayImage::new(5, 5, t.data.iter().map(|v| 255.0 - v).collect());
        let (s, _) = ncc_at(&t, &neg, 0, 0);
        assert!((s + 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_window_is_degenerate() {
        let mut rng = SeededRng::new(3);
        let t = random(3, 3, &mut rng);
        let flat = GrayImage::new(3, 3, vec![0.3; 9]);
        assert_eq!(ncc_at(&t, &flat, 0, 0), (0.0, true));
    }

    #[test]
    fn template_larger_than_region() {
        let img = GrayImage::new(4, 4, vec![0.0; 16]);
        let t = GrayImage::new(5, 2, vec![0.0; 10]);
        assert!(matches!(ncc_match(&t, &img, Region::whole(&img)), Err(Error::TemplateLargerThanRegion { .. })));
    }
}
