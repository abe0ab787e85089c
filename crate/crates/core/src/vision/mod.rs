//! Pixel-level extraction: timer OCR, round segmentation, icon detection and
//! tactical event inference over rendered minimap frames.

pub mod events;
pub mod extract;
pub mod glyphs;
pub mod hud;
pub mod icons;
pub mod ncc;
pub mod score;
pub mod segment;

pub use events::{infer_events, InferredEvents};
pub use extract::{ExtractedRound, Extractor, FrameObservation, VisionConfig};
pub use hud::{read_timer, HudReader};
pub use icons::{detect_icons, DetectConfig, Detection, IconKind, IconTemplates};
pub use ncc::{ncc_at, ncc_match, NccMatch, PreparedTemplate, Region};
pub use score::{match_agents, match_events, MatchCounts};
pub use segment::{median_filter, segment_rounds, RoundBoundary, SegmentConfig};
