//! End-to-end extraction: frames in, round boundaries and event labels out.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, EventRecord, RoundRecord, SplitSpec};
use crate::error::{Error, Result};
use crate::fusion::EventLabel;
use crate::image::{read_raw_stream, FrameImage};
use crate::map::{MapSpec, Roster};
use crate::tactics::FootstepRule;
use crate::types::Outcome;

use super::events::infer_events;
use super::glyphs::IconSet;
use super::hud::HudReader;
use super::icons::{detect_icons, DetectConfig, Detection, IconTemplates};
use super::segment::{segment_rounds, RoundBoundary, SegmentConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionConfig {
    pub fps: usize,
    pub ncc_threshold: f64,
    pub nms_radius: usize,
    pub prune_candidates: bool,
    pub median_width: usize,
    pub max_gap_s: f64,
    /// Overrides the map's audible radius when set.
    pub audible_radius: Option<f64>,
    pub v_min: f64,
    pub debounce_s: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            fps: 8,
            ncc_threshold: 0.8,
            nms_radius: super::glyphs::ICON,
            prune_candidates: true,
            median_width: 5,
            max_gap_s: 2.0,
            audible_radius: None,
            v_min: 1.5,
            debounce_s: 1.0,
        }
    }
}

impl VisionConfig {
    pub fn footstep_rule(&self, map: &MapSpec) -> FootstepRule {
        FootstepRule {
            radius: self.audible_radius.unwrap_or(map.audible_radius),
            v_min: self.v_min,
            debounce_frames: ((self.debounce_s * self.fps as f64).round() as usize).max(1),
        }
    }
}

/// Everything read from one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameObservation {
    pub timer: Option<u32>,
    pub banner: Option<Outcome>,
    pub detections: Vec<Detection>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedRound {
    pub round_id: String,
    pub video: String,
    pub boundary: RoundBoundary,
    pub events: Vec<EventLabel>,
    pub unmapped_positions: usize,
}

pub struct Extractor {
    pub map: MapSpec,
    pub roster: Roster,
    pub config: VisionConfig,
    hud: HudReader,
    icons: IconTemplates,
}

impl Extractor {
    pub fn new(map: MapSpec, roster: Roster, config: VisionConfig) -> Self {
        let teams: Vec<_> = roster.agents.iter().map(|a| a.team).collect();
        let icons = IconTemplates::new(&IconSet::new(&teams));
        let hud = HudReader::new(&map, config.ncc_threshold);
        Self { map, roster, config, hud, icons }
    }

    pub fn hud(&self) -> &HudReader {
        &self.hud
    }

    pub fn detect_config(&self) -> DetectConfig {
        DetectConfig {
            threshold: self.config.ncc_threshold,
            nms_radius: self.config.nms_radius,
            prune: self.config.prune_candidates,
        }
    }

    pub fn detect(&self, frame: &FrameImage) -> Vec<Detection> {
        detect_icons(frame, &frame.gray(), &self.map, &self.icons, &self.detect_config())
    }

    pub fn observe(&self, frame: &FrameImage) -> FrameObservation {
        let gray = frame.gray();
        FrameObservation {
            timer: self.hud.read_timer(&gray),
            banner: self.hud.read_banner(&gray),
            detections: detect_icons(frame, &gray, &self.map, &self.icons, &self.detect_config()),
        }
    }

    /// Frame-parallel observation of a whole video.
    pub fn observe_all(&self, frames: &[FrameImage]) -> Vec<FrameObservation> {
        frames.par_iter().map(|f| self.observe(f)).collect()
    }

    /// Segment one video and label the events of each complete round.
    pub fn extract_video(&self, obs: &[FrameObservation], video: &str) -> Vec<ExtractedRound> {
        let readings: Vec<Option<u32>> = obs.iter().map(|o| o.timer).collect();
        let banners: Vec<Option<Outcome>> = obs.iter().map(|o| o.banner).collect();
        let mut seg = SegmentConfig::new(self.config.fps);
        seg.median_width = self.config.median_width;
        seg.max_gap_s = self.config.max_gap_s;
        let bounds = segment_rounds(&readings, &banners, &seg, &self.map.id);
        let single = bounds.len() == 1;
        bounds
            .into_iter()
            .enumerate()
            .map(|(k, b)| {
                let dets: Vec<Vec<Detection>> =
                    obs[b.start_frame..b.end_frame].iter().map(|o| o.detections.clone()).collect();
                let inferred =
                    infer_events(&dets, &self.map, &self.roster, self.config.footstep_rule(&self.map), self.config.fps);
                ExtractedRound {
                    round_id: if single { video.to_string() } else { format!("{video}_{k:02}") },
                    video: video.to_string(),
                    boundary: b,
                    events: inferred.events,
                    unmapped_positions: inferred.unmapped_positions,
                }
            })
            .collect()
    }
}

/// An input video: a directory of PNG frames or a raw RGB24 stream with a JSON sidecar.
#[derive(Clone, Debug, PartialEq)]
pub enum VideoSource {
    FrameDir { id: String, path: PathBuf },
    Raw { id: String, stream: PathBuf, sidecar: PathBuf },
}

impl VideoSource {
    pub fn id(&self) -> &str {
        match self {
            VideoSource::FrameDir { id, .. } | VideoSource::Raw { id, .. } => id,
        }
    }

    pub fn load(&self) -> Result<Vec<FrameImage>> {
        match self {
            VideoSource::FrameDir { path, .. } => {
                png_files(path)?.par_iter().map(|p| FrameImage::read_png(p)).collect()
            }
            VideoSource::Raw { stream, sidecar, .. } => Ok(read_raw_stream(stream, sidecar)?.1),
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    v.sort();
    Ok(v)
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect())
}

/// Videos under `input`: its `frames/` subdirectory if present, else `input`
/// itself. Each subdirectory holding PNGs is one video, loose PNGs form one
/// video named after the directory, and every `*.rgb` with a same-stem `.json`
/// sidecar is a raw stream.
pub fn discover_videos(input: &Path) -> Result<Vec<VideoSource>> {
    let base = if input.join(dataset::FRAMES_DIR).is_dir() { input.join(dataset::FRAMES_DIR) } else { input.to_path_buf() };
    let mut out = Vec::new();
    let name = |p: &Path| p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if !png_files(&base)?.is_empty() {
        out.push(VideoSource::FrameDir { id: name(&base), path: base.clone() });
    }
    for p in sorted_entries(&base)? {
        if p.is_dir() && !png_files(&p)?.is_empty() {
            out.push(VideoSource::FrameDir { id: name(&p), path: p });
        } else if p.extension().is_some_and(|e| e == "rgb") {
            let sidecar = p.with_extension("json");
            if sidecar.is_file() {
                let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                out.push(VideoSource::Raw { id, stream: p, sidecar });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub videos: usize,
    pub rounds: usize,
    pub events: usize,
    pub unmapped_positions: usize,
}

/// Run extraction over every video under `input` and write `rounds.jsonl`
/// and `events.jsonl` into `out`. Frame directories are referenced by
/// absolute path so the manifest can live elsewhere.
pub fn extract_to_dir(
    extractor: &Extractor,
    input: &Path,
    out: &Path,
    split_seed: u64,
    split: SplitSpec,
) -> Result<ExtractSummary> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let videos = discover_videos(input)?;
    let mut rounds = Vec::new();
    let mut summary = ExtractSummary { videos: videos.len(), ..Default::default() };
    for v in &videos {
        let frames = v.load()?;
        let obs = extractor.observe_all(&frames);
        for r in extractor.extract_video(&obs, v.id()) {
            let video = match v {
                VideoSource::FrameDir { path, .. } => {
                    Some(std::fs::canonicalize(path).map_err(|e| Error::io(path, e))?.to_string_lossy().into_owned())
                }
                VideoSource::Raw { .. } => None,
            };
            rounds.push((r, video));
        }
    }
    let ids: Vec<String> = rounds.iter().map(|(r, _)| r.round_id.clone()).collect();
    let splits = dataset::assign_splits(&ids, split_seed, split);
    let mut records = Vec::new();
    let mut events = Vec::new();
    for ((r, video), split) in rounds.into_iter().zip(splits) {
        summary.events += r.events.len();
        summary.unmapped_positions += r.unmapped_positions;
        records.push(RoundRecord {
            round_id: r.round_id.clone(),
            start_frame: r.boundary.start_frame,
            end_frame: r.boundary.end_frame,
            outcome: r.boundary.outcome,
            map: r.boundary.map.clone(),
            split,
            video,
        });
        events.extend(r.events.into_iter().map(|label| EventRecord { round_id: r.round_id.clone(), label }));
    }
    summary.rounds = records.len();
    dataset::write_jsonl(&out.join(dataset::ROUNDS_FILE), &records)?;
    dataset::write_jsonl(&out.join(dataset::EVENTS_FILE), &events)?;
    Ok(summary)
}
