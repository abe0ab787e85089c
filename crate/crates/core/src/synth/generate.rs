//! Writing simulated rounds as a dataset directory.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, EventRecord, FrameSource, RoundRecord, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::image::{write_raw_stream, FrameImage, RawStreamInfo};
use crate::rng::mix64;

use super::config::SimConfig;
use super::render::{video_len, Renderer};
use super::sim::{simulate, GroundTruth};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    /// `frames/{round_id}/{frame:06}.png`
    #[default]
    Png,
    /// `frames/{round_id}.rgb` plus a `.json` sidecar.
    Raw,
    /// Manifests only.
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateOptions {
    pub split: SplitSpec,
    pub format: FrameFormat,
}

/// One line of `truth.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub round_id: String,
    /// Video frame index of round frame 0.
    pub lead_in_frames: usize,
    #[serde(flatten)]
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub rounds: Vec<RoundRecord>,
    pub n_events: usize,
}

pub fn round_id(i: usize) -> String {
    format!("r{i:05}")
}

pub fn round_seed(seed: u64, i: usize) -> u64 {
    mix64(seed ^ mix64(i as u64 + 1))
}

/// Simulate rounds `0..n` of a configuration in parallel.
pub fn simulate_rounds(cfg: &SimConfig, n: usize, record_frames: bool) -> Vec<GroundTruth> {
    (0..n).into_par_iter().map(|i| simulate(cfg, round_seed(cfg.seed, i), record_frames)).collect()
}

/// Manifest rows for simulated rounds, with seeded 80/10/10-style splits.
pub fn round_records(cfg: &SimConfig, truths: &[GroundTruth], split: SplitSpec) -> Vec<RoundRecord> {
    let ids: Vec<String> = (0..truths.len()).map(round_id).collect();
    let splits = dataset::assign_splits(&ids, cfg.seed, split);
    ids.into_iter()
        .zip(truths)
        .zip(splits)
        .map(|((round_id, gt), split)| RoundRecord {
            round_id,
            start_frame: cfg.lead_in_frames,
            end_frame: cfg.lead_in_frames + gt.n_frames,
            outcome: gt.outcome,
            map: cfg.map.id.clone(),
            split,
            video: None,
        })
        .collect()
}

fn write_video(renderer: &Renderer, cfg: &SimConfig, gt: &GroundTruth, frames_dir: &Path, id: &str, format: FrameFormat) -> Result<()> {
    let n = video_len(gt, cfg);
    match format {
        FrameFormat::None => Ok(()),
        FrameFormat::Png => {
            let dir = frames_dir.join(id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for k in 0..n {
                renderer.video_frame(gt, cfg, k).write_png(&dir.join(format!("{k:06}.png")))?;
            }
            Ok(())
        }
        FrameFormat::Raw => {
            let frames: Vec<FrameImage> = (0..n).map(|k| renderer.video_frame(gt, cfg, k)).collect();
            let info = RawStreamInfo { width: cfg.map.width, height: cfg.map.height, fps: cfg.fps };
            write_raw_stream(&frames_dir.join(format!("{id}.rgb")), &frames_dir.join(format!("{id}.json")), info, &frames)
        }
    }
}

/// Simulate `n_rounds` rounds and write `rounds.jsonl`, `events.jsonl`,
/// `truth.jsonl` and the rendered frames under `out_dir`.
pub fn generate_dataset(cfg: &SimConfig, n_rounds: usize, out_dir: &Path) -> Result<Manifest> {
    generate_dataset_with(cfg, n_rounds, out_dir, GenerateOptions::default())
}

pub fn generate_dataset_with(cfg: &SimConfig, n_rounds: usize, out_dir: &Path, opts: GenerateOptions) -> Result<Manifest> {
    cfg.validate()?;
    let frames_dir = out_dir.join(dataset::FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let renderer = Renderer::new(&cfg.map, &cfg.roster);

    // Each round is simulated, rendered and serialized independently; only
    // its compact outputs are kept.
    let per_round: Vec<(GroundTruth, String)> = (0..n_rounds)
        .into_par_iter()
        .map(|i| {
            let id = round_id(i);
            let mut gt = simulate(cfg, round_seed(cfg.seed, i), true);
            write_video(&renderer, cfg, &gt, &frames_dir, &id, opts.format)?;
            let line = serde_json::to_string(&TruthRecord { round_id: id, lead_in_frames: cfg.lead_in_frames, truth: gt.clone() })
                .map_err(|e| Error::io(out_dir, e.into()))?;
            gt.frames = Vec::new();
            Ok((gt, line))
        })
        .collect::<Result<_>>()?;

    let truths: Vec<GroundTruth> = per_round.iter().map(|(g, _)| g.clone()).collect();
    let rounds = round_records(cfg, &truths, opts.split);
    let events: Vec<EventRecord> = rounds
        .iter()
        .zip(&truths)
        .flat_map(|(r, gt)| gt.events.iter().map(|e| EventRecord { round_id: r.round_id.clone(), label: e.clone() }))
        .collect();
    dataset::write_jsonl(&out_dir.join(dataset::ROUNDS_FILE), &rounds)?;
    dataset::write_jsonl(&out_dir.join(dataset::EVENTS_FILE), &events)?;
    let truth_path = out_dir.join(dataset::TRUTH_FILE);
    let mut text = String::new();
    for (_, line) in &per_round {
        text.push_str(line);
        text.push('\n');
    }
    std::fs::write(&truth_path, text).map_err(|e| Error::io(&truth_path, e))?;
    Ok(Manifest { rounds, n_events: events.len() })
}

/// Frames rendered on demand from simulator state, in manifest order.
pub struct RenderedFrames<'a> {
    pub renderer: Renderer,
    pub cfg: &'a SimConfig,
    pub truths: &'a [GroundTruth],
}

impl<'a> RenderedFrames<'a> {
    pub fn new(cfg: &'a SimConfig, truths: &'a [GroundTruth]) -> Self {
        Self { renderer: Renderer::new(&cfg.map, &cfg.roster), cfg, truths }
    }
}

impl FrameSource for RenderedFrames<'_> {
    fn frame(&self, round: usize, frame: usize) -> Result<FrameImage> {
        let gt = self.truths.get(round).ok_or(Error::IndexOutOfRange { index: round, len: self.truths.len() })?;
        if frame >= gt.frames.len() {
            return Err(Error::IndexOutOfRange { index: frame, len: gt.frames.len() });
        }
        Ok(self.renderer.round_frame(gt, self.cfg, frame))
    }
}

/// Split counts of a manifest as `(train, val, test)`.
pub fn split_counts(rounds: &[RoundRecord]) -> (usize, usize, usize) {
    let c = |s| rounds.iter().filter(|r| r.split == s).count();
    (c(Split::Train), c(Split::Val), c(Split::Test))
}
