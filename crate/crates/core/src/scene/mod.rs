//! Challenge-legal scene geometry and room impulse responses.

pub mod decay;
pub mod geometry;
pub mod head;
pub mod rir;
pub mod room;

pub use decay::{estimate_rt60, schroeder_curve_db};
pub use geometry::{
    mic_world_positions, sample_scene_geometry, ChannelLabel, Ear, GeometrySampler, HeadGeometry,
    ScenePose,
};
pub use head::{binaural_head_filter, HeadFilter, HeadModel};
pub use rir::{compute_binaural_rir, compute_rir, RoomImpulseResponse, DEFAULT_MAX_ORDER};
pub use room::{absorption_from_rt60, RoomSpec, Vec3};
