use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::FrameImage;

/// `T` frames of `size×size` RGB in `[0, 1]`, stored `[T, H, W, 3]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: usize,
    pub size: usize,
    pub data: Vec<f64>,
}

impl Clip {
    pub fn zeros(frames: usize, size: usize) -> Self {
        Self { frames, size, data: vec![0.0; frames * size * size * 3] }
    }

    /// Box-downsample each frame by the integer factor `width / size`.
    pub fn from_frames(frames: &[&FrameImage], size: usize) -> Result<Self> {
        let mut clip = Self::zeros(frames.len(), size);
        for (t, img) in frames.iter().enumerate() {
            if img.width % size != 0 || img.height != img.width {
                return Err(Error::Config(format!(
                    "frame {}x{} cannot be box-downsampled to {size}x{size}",
                    img.width, img.height
                )));
            }
            let k = img.width / size;
            let norm = 1.0 / (255.0 * (k * k) as f64);
            let base = t * size * size * 3;
            for y in 0..size {
                for x in 0..size {
                    let mut acc = [0u32; 3];
                    for dy in 0..k {
                        let row = (y * k + dy) * img.width;
                        for dx in 0..k {
                            let p = (row + x * k + dx) * 3;
                            for c in 0..3 {
                                acc[c] += img.rgb[p + c] as u32;
                            }
                        }
                    }
                    let o = base + (y * size + x) * 3;
                    for c in 0..3 {
                        clip.data[o + c] = acc[c] as f64 * norm;
                    }
                }
            }
        }
        Ok(clip)
    }
}

/// Which frames feed the prediction at second `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClipMode {
    /// `T` indices spread evenly over `[0, fps·t − 1]`.
    #[default]
    UniformHistory,
    /// The last `T` frames before `fps·t`.
    RecentWindow,
}

/// Frame indices (relative to round start) for a prediction at second `t ≥ 1`.
/// Every index is `< fps·t`, so only frames up to second `t` are used.
pub fn sample_frame_indices(t: usize, fps: usize, clip_len: usize, mode: ClipMode) -> Vec<usize> {
    let last = (t * fps).max(1) - 1;
    match mode {
        ClipMode::UniformHistory => {
            if clip_len == 1 {
                return vec![last];
            }
            (0..clip_len)
                .map(|i| ((i * last) as f64 / (clip_len - 1) as f64).round() as usize)
                .collect()
        }
        ClipMode::RecentWindow => (0..clip_len).map(|i| (last + i + 1).saturating_sub(clip_len)).collect(),
    }
}
