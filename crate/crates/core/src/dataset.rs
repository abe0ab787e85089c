//! On-disk dataset layout: round manifest, event labels, frame directories
//! and the train/val/test split.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::EventLabel;
use crate::image::FrameImage;
use crate::rng::mix64;
use crate::types::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// One line of `rounds.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_id: String,
    pub start_frame: usize,
    pub end_frame: usize,
    pub outcome: Outcome,
    pub map: String,
    pub split: Split,
    /// Frame directory under `frames/` when it differs from `round_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub video: Option<String>,
}

impl RoundRecord {
    pub fn n_frames(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn duration_s(&self, fps: usize) -> f64 {
        self.n_frames() as f64 / fps as f64
    }

    pub fn video_dir(&self) -> &str {
        self.video.as_deref().unwrap_or(&self.round_id)
    }
}

/// One line of `events.jsonl`: an event label tagged with its round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub round_id: String,
    #[serde(flatten)]
    pub label: EventLabel,
}

pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const TRUTH_FILE: &str = "truth.jsonl";
pub const FRAMES_DIR: &str = "frames";

/// PNG path of `frame` in a video; `video` is a directory name under
/// `root/frames/` or an absolute directory path.
pub fn frame_path(root: &Path, video: &str, frame: usize) -> PathBuf {
    let dir = if Path::new(video).is_absolute() { PathBuf::from(video) } else { root.join(FRAMES_DIR).join(video) };
    dir.join(format!("{frame:06}.png"))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })?;
        out.push(item);
    }
    Ok(out)
}

/// Fractions of rounds in train and val; the rest is test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1 }
    }
}

fn id_hash(seed: u64, id: &str) -> u64 {
    id.bytes().fold(mix64(seed), |h, b| mix64(h ^ b as u64))
}

/// Split labels for `ids`: rounds are ordered by a seeded hash of their id and
/// cut at `round(n·train)` and `round(n·(train+val))`, so the sizes are exact
/// and membership depends only on the seed and the ids.
pub fn assign_splits(ids: &[String], seed: u64, spec: SplitSpec) -> Vec<Split> {
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (id_hash(seed, &ids[i]), i));
    let n_train = (n as f64 * spec.train).round() as usize;
    let n_val = ((n as f64 * (spec.train + spec.val)).round() as usize).max(n_train).min(n) - n_train;
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Rounds and their events loaded from a dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub rounds: Vec<RoundRecord>,
    /// Events per round, in `rounds` order.
    pub events: Vec<Vec<EventLabel>>,
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self> {
        let rounds: Vec<RoundRecord> = read_jsonl(&root.join(ROUNDS_FILE))?;
        let records: Vec<EventRecord> = match read_jsonl(&root.join(EVENTS_FILE)) {
            Ok(r) => r,
            Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let index: std::collections::HashMap<&str, usize> =
            rounds.iter().enumerate().map(|(i, r)| (r.round_id.as_str(), i)).collect();
        let mut events = vec![Vec::new(); rounds.len()];
        for r in records {
            if let Some(&i) = index.get(r.round_id.as_str()) {
                events[i].push(r.label);
            }
        }
        Ok(Self { root: root.to_path_buf(), rounds, events })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.rounds.len()).filter(|&i| self.rounds[i].split == split).collect()
    }
}

/// Frames of a round by round-relative index.
pub trait FrameSource: Sync {
    fn frame(&self, round: usize, frame: usize) -> Result<FrameImage>;
}

/// PNG frames under `root/frames/{video}/`.
pub struct DiskFrames<'a> {
    pub dataset: &'a Dataset,
}

impl FrameSource for DiskFrames<'_> {
    fn frame(&self, round: usize, frame: usize) -> Result<FrameImage> {
        let r = &self.dataset.rounds[round];
        FrameImage::read_png(&frame_path(&self.dataset.root, r.video_dir(), r.start_frame + frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EventKind, Team};

    #[test]
    fn splits_are_exact_and_seeded() {
        let ids: Vec<String> = (0..100).map(|i| format!("r{i:05}")).collect();
        let s = assign_splits(&ids, 7, SplitSpec::default());
        let count = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (80, 10, 10));
        assert_eq!(s, assign_splits(&ids, 7, SplitSpec::default()));
        assert_ne!(s, assign_splits(&ids, 8, SplitSpec::default()));
    }

    #[test]
    fn event_record_line_format() {
        let r = EventRecord {
            round_id: "r1".into(),
            label: EventLabel { t: 2.5, team: Team::Defender, agent: "Iris".into(), area: "mid".into(), kind: EventKind::FootstepHeard },
        };
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"round_id":"r1","t":2.5,"team":"DEF","agent":"Iris","area":"mid","kind":"footstep_heard"}"#);
        assert_eq!(serde_json::from_str::<EventRecord>(&line).unwrap(), r);
    }

    #[test]
    fn jsonl_round_trip_and_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        write_jsonl(&p, &[1u32, 2, 3]).unwrap();
        assert_eq!(read_jsonl::<u32>(&p).unwrap(), vec![1, 2, 3]);
        std::fs::write(&p, "1\nnope\n").unwrap();
        assert!(matches!(read_jsonl::<u32>(&p), Err(Error::Parse { line: 2, .. })));
    }
}
