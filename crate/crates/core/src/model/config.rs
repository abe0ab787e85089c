use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters of the fused video classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Square input side in pixels.
    pub image_size: usize,
    pub patch_size: usize,
    pub frames_per_clip: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    pub dropout_p: f64,
    pub n_classes: usize,
    pub fps: usize,
    /// Width of the event embedding tables before projection.
    pub event_dim: usize,
    /// Event rows averaged together before projection.
    pub pool_frames: usize,
    /// Per-channel statistics of `[0, 1]` pixels; clips are standardized with them.
    pub pixel_mean: [f64; 3],
    pub pixel_std: [f64; 3],
}

/// Channel means and deviations of rendered arena minimaps at 64 px.
const ARENA_MEAN: [f64; 3] = [0.187, 0.188, 0.203];
const ARENA_STD: [f64; 3] = [0.0995, 0.0872, 0.0937];

impl ModelConfig {
    /// Full-size architecture: 12 layers, 12 heads, width 768, 224px input.
    pub fn paper() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            frames_per_clip: 8,
            d_model: 768,
            n_layers: 12,
            n_heads: 12,
            mlp_ratio: 4,
            dropout_p: 0.1,
            n_classes: 2,
            fps: 8,
            event_dim: 128,
            pool_frames: 8,
            pixel_mean: ARENA_MEAN,
            pixel_std: ARENA_STD,
        }
    }

    /// CPU-sized variant used for training and tests.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            frames_per_clip: 8,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            mlp_ratio: 4,
            dropout_p: 0.1,
            n_classes: 2,
            fps: 8,
            event_dim: 128,
            pool_frames: 8,
            pixel_mean: ARENA_MEAN,
            pixel_std: ARENA_STD,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Config(format!("unknown model preset '{other}' (expected paper|desk)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.patch_size == 0 || self.image_size % self.patch_size != 0 {
            return bad("image_size must be a positive multiple of patch_size");
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if self.frames_per_clip == 0 || self.n_layers == 0 || self.fps == 0 || self.pool_frames == 0 {
            return bad("frames_per_clip, n_layers, fps and pool_frames must be positive");
        }
        if self.n_classes != 2 {
            return bad("the classifier head is two-class (attacker win, defender win)");
        }
        if !self.pixel_std.iter().all(|s| s.is_finite() && *s > 0.0) || !self.pixel_mean.iter().all(|m| m.is_finite()) {
            return bad("pixel_std must be positive and pixel_mean finite");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        Ok(())
    }

    /// Patches per frame.
    pub fn n_patches(&self) -> usize {
        let side = self.image_size / self.patch_size;
        side * side
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Total tokens per clip: one CLS plus `T·N` patch tokens.
    pub fn n_tokens(&self) -> usize {
        1 + self.frames_per_clip * self.n_patches()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        ModelConfig::paper().validate().unwrap();
        ModelConfig::desk().validate().unwrap();
        assert_eq!(ModelConfig::paper().n_patches(), 196);
    }

    #[test]
    fn desk_token_grid() {
        let c = ModelConfig::desk();
        assert_eq!(c.n_patches(), 64);
        assert_eq!((c.frames_per_clip, c.n_patches(), c.d_model), (8, 64, 64));
        assert_eq!(c.n_tokens(), 8 * 64 + 1);
    }

    #[test]
    fn rejects_indivisible_heads() {
        let mut c = ModelConfig::desk();
        c.n_heads = 5;
        assert!(c.validate().is_err());
    }
}
