use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::room::{RoomSpec, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    pub const BOTH: [Ear; 2] = [Ear::Left, Ear::Right];

    pub fn letter(self) -> char {
        match self {
            Ear::Left => 'L',
            Ear::Right => 'R',
        }
    }

    pub fn other(self) -> Ear {
        match self {
            Ear::Left => Ear::Right,
            Ear::Right => Ear::Left,
        }
    }

    /// +1 for the left ear (head-frame +y), -1 for the right.
    pub fn side(self) -> f64 {
        match self {
            Ear::Left => 1.0,
            Ear::Right => -1.0,
        }
    }
}

impl FromStr for Ear {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l" | "left" => Ok(Ear::Left),
            "r" | "right" => Ok(Ear::Right),
            _ => Err(Error::InvalidArgument(format!("unknown ear label `{s}`"))),
        }
    }
}

impl fmt::Display for Ear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ear::Left => "left",
            Ear::Right => "right",
        })
    }
}

/// One hearing-aid microphone, e.g. `L0` is the front mic on the left aid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChannelLabel {
    pub ear: Ear,
    pub mic_index: usize,
}

impl ChannelLabel {
    pub fn new(ear: Ear, mic_index: usize) -> Self {
        Self { ear, mic_index }
    }
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.ear.letter(), self.mic_index)
    }
}

impl FromStr for ChannelLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad channel label `{s}`"));
        let mut chars = s.chars();
        let ear = chars.next().ok_or_else(bad)?.to_string().parse::<Ear>()?;
        let mic_index = chars.as_str().parse().map_err(|_| bad())?;
        Ok(ChannelLabel { ear, mic_index })
    }
}

/// Receiver/source placement for one scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePose {
    pub source_position: Vec3,
    pub receiver_position: Vec3,
    /// Orientation of the head front, radians anticlockwise from +x.
    pub receiver_yaw: f64,
}

impl ScenePose {
    /// Unit vectors of the head frame in world coordinates: front, left.
    pub fn head_axes(&self) -> (Vec3, Vec3) {
        let (s, c) = self.receiver_yaw.sin_cos();
        (Vec3::new(c, s, 0.0), Vec3::new(-s, c, 0.0))
    }

    /// Azimuth of `p` in the head frame (0 = straight ahead, positive to
    /// the left), ignoring elevation.
    pub fn azimuth_of(&self, p: Vec3) -> f64 {
        let (front, left) = self.head_axes();
        let d = p - self.receiver_position;
        d.dot(left).atan2(d.dot(front))
    }

    pub fn check(&self, room: &RoomSpec, clearance: f64) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGeometry(m));
        if !room.contains(self.source_position) || !room.contains(self.receiver_position) {
            return bad("positions must lie strictly inside the room".into());
        }
        let wall = room.wall_clearance(self.receiver_position);
        if wall < clearance {
            return bad(format!("receiver is {wall:.3} m from a wall"));
        }
        let sep = self.receiver_position.distance(self.source_position);
        if sep < clearance {
            return bad(format!("receiver is {sep:.3} m from the source"));
        }
        if self.azimuth_of(self.source_position).abs() > 1e-9 {
            return bad("receiver is not facing the source".into());
        }
        Ok(())
    }
}

/// Hearing-aid microphone layout on a spherical head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadGeometry {
    pub head_radius: f64,
    pub mics_per_ear: usize,
    /// Left-ear microphone offsets in the head frame (x front, y left,
    /// z up), front mic first. The right ear mirrors these in y.
    pub mic_offsets: Vec<Vec3>,
    pub ear_height: f64,
}

impl Default for HeadGeometry {
    fn default() -> Self {
        Self::with_mics(2).expect("two mics per ear is valid")
    }
}

impl HeadGeometry {
    pub const DEFAULT_RADIUS: f64 = 0.0875;

    /// Behind-the-ear layout with mics 7.6 mm apart front to back.
    pub fn with_mics(mics_per_ear: usize) -> Result<Self> {
        let a = Self::DEFAULT_RADIUS;
        let xs: &[f64] = match mics_per_ear {
            2 => &[0.0038, -0.0038],
            3 => &[0.0076, 0.0, -0.0076],
            n => {
                return Err(Error::InvalidArgument(format!(
                    "mics_per_ear must be 2 or 3, got {n}"
                )))
            }
        };
        Ok(Self {
            head_radius: a,
            mics_per_ear,
            mic_offsets: xs.iter().map(|&x| Vec3::new(x, a, 0.0)).collect(),
            ear_height: 1.2,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.mics_per_ear) || self.mic_offsets.len() != self.mics_per_ear {
            return Err(Error::InvalidArgument(format!(
                "mics_per_ear must be 2 or 3 with one offset each (got {} / {})",
                self.mics_per_ear,
                self.mic_offsets.len()
            )));
        }
        if !(self.head_radius > 0.0) {
            return Err(Error::InvalidArgument("head_radius must be positive".into()));
        }
        Ok(())
    }

    /// Channel labels in file order: left mics, then right mics.
    pub fn channels(&self) -> Vec<ChannelLabel> {
        Ear::BOTH
            .iter()
            .flat_map(|&ear| (0..self.mics_per_ear).map(move |i| ChannelLabel::new(ear, i)))
            .collect()
    }

    /// Offset of a microphone in the head frame.
    pub fn offset(&self, label: ChannelLabel) -> Vec3 {
        let o = self.mic_offsets[label.mic_index];
        match label.ear {
            Ear::Left => o,
            Ear::Right => Vec3::new(o.x, -o.y, o.z),
        }
    }
}

/// Head-frame offsets mapped into the room for a given pose.
pub fn mic_world_positions(pose: &ScenePose, head: &HeadGeometry) -> Vec<(ChannelLabel, Vec3)> {
    head.channels()
        .into_iter()
        .map(|label| {
            let p = pose.receiver_position + head.offset(label).rotate_z(pose.receiver_yaw);
            (label, p)
        })
        .collect()
}

/// Constraints for drawing challenge-legal poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometrySampler {
    pub wall_clearance: f64,
    pub source_clearance: f64,
    pub source_wall_margin: f64,
    pub ear_height: f64,
    pub source_height: f64,
    pub max_draws: usize,
}

impl Default for GeometrySampler {
    fn default() -> Self {
        Self {
            wall_clearance: 1.0,
            source_clearance: 1.0,
            source_wall_margin: 0.5,
            ear_height: 1.2,
            source_height: 1.2,
            max_draws: 10_000,
        }
    }
}

impl GeometrySampler {
    /// Receiver uniform over the floor area at least `wall_clearance` from
    /// the walls, then the source rejection-sampled at least
    /// `source_clearance` from the receiver.
    pub fn sample<R: Rng>(&self, room: &RoomSpec, rng: &mut R) -> Result<ScenePose> {
        room.validate()?;
        let m = self.wall_clearance;
        if room.length_x <= 2.0 * m || room.length_y <= 2.0 * m {
            return Err(Error::InfeasibleGeometry(format!(
                "{:.2} x {:.2} m floor leaves no area {m} m from the walls",
                room.length_x, room.length_y
            )));
        }
        if self.ear_height >= room.length_z || self.source_height >= room.length_z {
            return Err(Error::InfeasibleGeometry("room is lower than the listener".into()));
        }
        let receiver = Vec3::new(
            rng.random_range(m..room.length_x - m),
            rng.random_range(m..room.length_y - m),
            self.ear_height,
        );
        let sm = self.source_wall_margin;
        for _ in 1..self.max_draws {
            let source = Vec3::new(
                rng.random_range(sm..room.length_x - sm),
                rng.random_range(sm..room.length_y - sm),
                self.source_height,
            );
            if source.distance(receiver) >= self.source_clearance {
                let d = source - receiver;
                return Ok(ScenePose {
                    source_position: source,
                    receiver_position: receiver,
                    receiver_yaw: d.y.atan2(d.x),
                });
            }
        }
        Err(Error::SamplingFailure(self.max_draws))
    }

    /// Interferer location: same wall rule, at least `source_clearance`
    /// from the receiver and 0.5 m from the target talker.
    pub fn sample_interferer<R: Rng>(
        &self,
        room: &RoomSpec,
        pose: &ScenePose,
        rng: &mut R,
    ) -> Result<Vec3> {
        let m = self.wall_clearance;
        let z_hi = (room.length_z - 0.3).min(1.8).max(0.6);
        for _ in 0..self.max_draws {
            let p = Vec3::new(
                rng.random_range(m..room.length_x - m),
                rng.random_range(m..room.length_y - m),
                rng.random_range(0.5..z_hi),
            );
            let horiz = |a: Vec3, b: Vec3| Vec3::new(a.x - b.x, a.y - b.y, 0.0).norm();
            if horiz(p, pose.receiver_position) >= self.source_clearance
                && horiz(p, pose.source_position) >= 0.5
            {
                return Ok(p);
            }
        }
        Err(Error::SamplingFailure(self.max_draws))
    }
}

/// Draw a pose with the default sampler; deterministic in `rng_seed`.
pub fn sample_scene_geometry(room: &RoomSpec, rng_seed: u64) -> Result<ScenePose> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    GeometrySampler::default().sample(room, &mut rng)
}
