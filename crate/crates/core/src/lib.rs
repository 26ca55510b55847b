//! Simulated speech-in-noise challenge infrastructure.
//!
//! Scenes are sampled in a cuboid living room, rendered to multi-microphone
//! binaural hearing-aid signals, processed by a baseline hearing aid,
//! degraded by a hearing-loss model, scored by a baseline intelligibility
//! predictor and by a simulated listener panel, and finally ranked under
//! the challenge rules.

pub mod causality;
pub mod corpus;
pub mod dataset;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod exec;
pub mod harness;
pub mod hearing_loss;
pub mod interferers;
pub mod listener;
pub mod panel;
pub mod prediction;
pub mod render;
pub mod scene;
pub mod wav;

pub use error::{Error, ErrorClass, Result};
pub use exec::Execution;
