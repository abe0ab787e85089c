//! Round outcome prediction from tactical-shooter minimap video.
//!
//! The pipeline: a seeded arena simulator renders minimap rounds
//! ([`synth`]); pixel-level extraction recovers round boundaries, outcomes
//! and tactical events ([`vision`]); a divided space-time attention
//! classifier with early event fusion ([`model`], [`fusion`]) built on a
//! small reverse-mode tensor library ([`tensor`]) is trained ([`train`]) and
//! scored per second of round time ([`eval`]).

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod image;
pub mod map;
pub mod model;
pub mod rng;
pub mod synth;
pub mod tactics;
pub mod tensor;
pub mod train;
pub mod types;
pub mod vision;

pub use error::{Error, Result};
pub use fusion::EventLabel;
pub use map::{MapSpec, Roster};
pub use model::{ModelConfig, ModelWeights};
pub use types::{EventKind, Outcome, Team};
