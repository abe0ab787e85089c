//! Synthetic arena: round simulation, minimap rendering and dataset generation.

mod config;
mod generate;
mod render;
mod sim;

pub use config::{Policy, SimConfig};
pub use generate::{
    generate_dataset, generate_dataset_with, round_id, round_records, round_seed, simulate_rounds, split_counts,
    FrameFormat, GenerateOptions, Manifest, RenderedFrames, TruthRecord,
};
pub use render::{add_pixel_noise, render_frame, timer_at, video_len, Hud, Renderer, ICON_SIZE};
pub use sim::{simulate, simulate_round, EndReason, FrameState, GroundTruth, SkillIcon, TeamTraits};
