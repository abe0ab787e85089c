//! Divided space-time attention video classifier with early event fusion.

mod clip;
mod config;
mod params;
mod transformer;

pub use clip::{sample_frame_indices, Clip, ClipMode};
pub use config::ModelConfig;
pub use params::{AttnVars, BlockVars, ModelVars, ModelWeights, ParamKind, ParamSet};
pub use transformer::{argmax_class, divided_block, forward_classify, grouped_attention, patch_embed, patchify};

use crate::error::{Error, Result};
use crate::fusion::{fused_tokens, EncodedEvent};
use crate::rng::SeededRng;
use crate::tensor::{grad_check, GradCheckOptions, GradCheckReport, Tape, TensorError, Var};

/// Everything needed to classify one (round, second) sample.
#[derive(Clone, Copy, Debug)]
pub struct SampleInput<'a> {
    pub clip: &'a Clip,
    /// Frame indices (relative to round start) the clip was built from.
    pub sampled_frames: &'a [usize],
    /// Encoded events of the round; `None` selects the visual-only model.
    pub events: Option<&'a [EncodedEvent]>,
    /// Frames in the round (bounds the event grid).
    pub n_frames: usize,
}

/// Logits for one sample, routing events through the fusion path when present.
pub fn sample_logits(
    tape: &mut Tape,
    weights: &ModelWeights,
    vars: &ModelVars,
    input: &SampleInput<'_>,
    rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let cfg = &weights.config;
    let fused = match input.events {
        Some(events) => Some(fused_tokens(
            tape,
            &vars.fusion,
            events,
            input.n_frames,
            input.sampled_frames,
            cfg.pool_frames,
        )?),
        None => None,
    };
    forward_classify(tape, cfg, vars, input.clip, fused, rng)
}

/// Inference-only logits (no gradients recorded on parameters, dropout off).
pub fn predict_logits(weights: &ModelWeights, input: &SampleInput<'_>) -> Result<[f64; 2]> {
    let mut tape = Tape::new();
    let vars = weights.bind(&mut tape, false);
    let out = sample_logits(&mut tape, weights, &vars, input, None)?;
    let v = tape.value(out).data();
    Ok([v[0], v[1]])
}

/// Two-class cross-entropy of one sample against `target` (0 attacker win, 1 defender win).
pub fn sample_loss(
    tape: &mut Tape,
    weights: &ModelWeights,
    vars: &ModelVars,
    input: &SampleInput<'_>,
    target: usize,
    rng: Option<&mut SeededRng>,
) -> Result<Var> {
    let logits = sample_logits(tape, weights, vars, input, rng)?;
    let logits = tape.reshape(logits, &[1, weights.config.n_classes])?;
    Ok(tape.cross_entropy_with_logits(logits, &[target])?)
}

/// Finite-difference check of the full classifier loss, dropout off.
pub fn check_model_gradients(
    weights: &ModelWeights,
    input: &SampleInput<'_>,
    target: usize,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let report = grad_check(weights.params.tensors(), opts, |tape, handles| {
        let vars = weights.vars_from(handles.to_vec());
        sample_loss(tape, weights, &vars, input, target, None).map_err(|e| match e {
            Error::Tensor(t) => t,
            other => TensorError::ShapeMismatch { op: "model", detail: other.to_string() },
        })
    })?;
    Ok(report)
}

/// Gradient check of the fused classifier on a random clip with a few
/// events in the first chunks. Weights, clip and events derive from `seed`.
pub fn check_random_sample_gradients(
    cfg: &ModelConfig,
    vocab: &crate::fusion::EventVocab,
    seed: u64,
    entries_per_param: Option<usize>,
) -> Result<GradCheckReport> {
    let mut rng = SeededRng::derive(seed, 0);
    let weights = ModelWeights::init(cfg, vocab, &mut rng)?;
    let clip = Clip {
        frames: cfg.frames_per_clip,
        size: cfg.image_size,
        data: (0..cfg.frames_per_clip * cfg.image_size * cfg.image_size * 3).map(|_| rng.uniform()).collect(),
    };
    let n_frames = cfg.frames_per_clip * 5;
    let frames: Vec<usize> = (0..cfg.frames_per_clip).map(|i| i * 5).collect();
    let events: Vec<EncodedEvent> = (0..4)
        .map(|_| EncodedEvent {
            frame: rng.below(n_frames),
            team: rng.below(2),
            agent: rng.below(vocab.agents.len()),
            area: rng.below(vocab.areas.len()),
            kind: rng.below(crate::types::EventKind::ALL.len()),
        })
        .collect();
    let input = SampleInput { clip: &clip, sampled_frames: &frames, events: Some(&events), n_frames };
    let opts = GradCheckOptions { max_entries_per_param: entries_per_param, seed, ..Default::default() };
    check_model_gradients(&weights, &input, rng.below(2), &opts)
}
