use crate::dataset::{FrameSource, RoundRecord};
use crate::error::{Error, Result};
use crate::fusion::{encode_events, EncodedEvent, EventLabel, EventVocab};
use crate::image::FrameImage;
use crate::model::{sample_frame_indices, Clip, ClipMode, ModelConfig, SampleInput};

/// Rounds, their events and a source for their frames.
#[derive(Clone, Copy)]
pub struct RoundSet<'a> {
    pub rounds: &'a [RoundRecord],
    /// Events per round, in `rounds` order.
    pub events: &'a [Vec<EventLabel>],
    pub frames: &'a dyn FrameSource,
}

impl<'a> RoundSet<'a> {
    pub fn new(rounds: &'a [RoundRecord], events: &'a [Vec<EventLabel>], frames: &'a dyn FrameSource) -> Self {
        assert_eq!(rounds.len(), events.len(), "one event list per round");
        Self { rounds, events, frames }
    }

    pub fn round(&self, i: usize) -> RoundView<'a> {
        RoundView { frames: self.frames, index: i, n_frames: self.rounds[i].n_frames(), events: &self.events[i] }
    }
}

/// One round as seen by the model.
#[derive(Clone, Copy)]
pub struct RoundView<'a> {
    pub frames: &'a dyn FrameSource,
    /// Round index within `frames`.
    pub index: usize,
    pub n_frames: usize,
    pub events: &'a [EventLabel],
}

/// Whole seconds a round lasts; predictions exist for `1..=full_seconds`.
pub fn full_seconds(n_frames: usize, fps: usize) -> usize {
    n_frames / fps
}

/// Owned inputs for the prediction at second `t`.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub clip: Clip,
    pub sampled_frames: Vec<usize>,
    pub events: Option<Vec<EncodedEvent>>,
    /// Frames visible at `t`, which bound the event grid.
    pub n_frames: usize,
}

impl PreparedSample {
    pub fn input(&self) -> SampleInput<'_> {
        SampleInput {
            clip: &self.clip,
            sampled_frames: &self.sampled_frames,
            events: self.events.as_deref(),
            n_frames: self.n_frames,
        }
    }
}

/// Build the clip (and, with `with_events`, the event stream) for second `t`
/// from frames and events strictly before `t·fps` only.
pub fn prepare_sample(
    cfg: &ModelConfig,
    vocab: &EventVocab,
    round: &RoundView<'_>,
    t: usize,
    mode: ClipMode,
    with_events: bool,
) -> Result<PreparedSample> {
    let visible = t * cfg.fps;
    if t == 0 || visible > round.n_frames {
        return Err(Error::IndexOutOfRange { index: t, len: full_seconds(round.n_frames, cfg.fps) + 1 });
    }
    let sampled_frames = sample_frame_indices(t, cfg.fps, cfg.frames_per_clip, mode);
    let images = sampled_frames.iter().map(|&f| round.frames.frame(round.index, f)).collect::<Result<Vec<FrameImage>>>()?;
    let refs: Vec<&FrameImage> = images.iter().collect();
    let clip = Clip::from_frames(&refs, cfg.image_size)?;
    let events = if with_events {
        let past: Vec<EventLabel> =
            round.events.iter().filter(|e| ((e.t * cfg.fps as f64).round().max(0.0) as usize) < visible).cloned().collect();
        Some(encode_events(&past, vocab, cfg.fps, visible)?)
    } else {
        None
    };
    Ok(PreparedSample { clip, sampled_frames, events, n_frames: visible })
}
