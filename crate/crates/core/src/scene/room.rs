use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point or direction in metres. Serialised as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Rotate about the vertical axis through the origin.
    pub fn rotate_z(self, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * self.x - s * self.y, s * self.x + c * self.y, self.z)
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

fn default_speed_of_sound() -> f64 {
    343.0
}

/// Cuboid room with one corner at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub length_x: f64,
    pub length_y: f64,
    pub length_z: f64,
    pub rt60_target: f64,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

impl RoomSpec {
    pub fn new(length_x: f64, length_y: f64, length_z: f64, rt60_target: f64) -> Self {
        Self {
            length_x,
            length_y,
            length_z,
            rt60_target,
            speed_of_sound: default_speed_of_sound(),
        }
    }

    pub fn dims(&self) -> [f64; 3] {
        [self.length_x, self.length_y, self.length_z]
    }

    pub fn volume(&self) -> f64 {
        self.length_x * self.length_y * self.length_z
    }

    pub fn surface_area(&self) -> f64 {
        let [x, y, z] = self.dims();
        2.0 * (x * y + x * z + y * z)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.dims().iter().all(|d| d.is_finite());
        if !finite || self.dims().iter().any(|&d| d <= 0.0) {
            return Err(Error::InvalidRoom(format!(
                "dimensions must be positive, got {:?}",
                self.dims()
            )));
        }
        if !(self.rt60_target > 0.0) {
            return Err(Error::InvalidRoom(format!(
                "rt60_target must be positive, got {}",
                self.rt60_target
            )));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::InvalidRoom("speed_of_sound must be positive".into()));
        }
        Ok(())
    }

    /// Uniform absorption coefficient from Sabine's equation,
    /// `alpha = 0.161 V / (S T60)`.
    pub fn absorption(&self) -> Result<f64> {
        self.validate()?;
        let alpha = 0.161 * self.volume() / (self.surface_area() * self.rt60_target);
        // Tolerate round-off when the target sits exactly on alpha = 1.
        if alpha > 1.0 + 1e-12 {
            return Err(Error::InfeasibleReverberation {
                rt60: self.rt60_target,
                alpha,
            });
        }
        Ok(alpha.min(1.0))
    }

    /// Sabine reverberation time for a given absorption coefficient.
    pub fn sabine_rt60(&self, alpha: f64) -> f64 {
        0.161 * self.volume() / (self.surface_area() * alpha)
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x > 0.0
            && p.x < self.length_x
            && p.y > 0.0
            && p.y < self.length_y
            && p.z > 0.0
            && p.z < self.length_z
    }

    /// Distance from `p` to the nearest of the four vertical walls.
    pub fn wall_clearance(&self, p: Vec3) -> f64 {
        p.x.min(self.length_x - p.x)
            .min(p.y)
            .min(self.length_y - p.y)
    }
}

/// Free-function form of [`RoomSpec::absorption`].
pub fn absorption_from_rt60(room: &RoomSpec) -> Result<f64> {
    room.absorption()
}
