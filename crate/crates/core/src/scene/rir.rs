//! Image-source room impulse responses for a cuboid with uniform,
//! frequency-independent absorption.
//!
//! Each image with `n` wall reflections contributes `(1 - alpha)^(n/2) / d`
//! at delay `d / c`, rounded to the nearest sample. Unit gain at 1 m.

use serde::{Deserialize, Serialize};

use super::geometry::{ChannelLabel, HeadGeometry, ScenePose};
use super::head::HeadModel;
use super::room::{RoomSpec, Vec3};
use crate::dsp::OnePoleHighpass;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ORDER: u32 = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomImpulseResponse {
    pub sample_rate: u32,
    pub taps: Vec<f64>,
    pub channel: Option<ChannelLabel>,
}

impl RoomImpulseResponse {
    pub fn energy(&self) -> f64 {
        crate::dsp::energy(&self.taps)
    }
}

/// Visit every image of `source` with at most `max_order` reflections.
/// The callback gets the image position and its reflection count.
pub fn for_each_image(room: &RoomSpec, source: Vec3, max_order: u32, mut f: impl FnMut(Vec3, u32)) {
    let n = max_order as i64;
    let [lx, ly, lz] = room.dims();
    let axis = |q: i64, m: i64, s: f64, l: f64| ((1 - 2 * q) as f64 * s + 2.0 * m as f64 * l, (2 * m - q).unsigned_abs());
    for qx in 0..2 {
        for mx in -n..=n {
            let (ix, nx) = axis(qx, mx, source.x, lx);
            if nx as i64 > n {
                continue;
            }
            for qy in 0..2 {
                for my in -n..=n {
                    let (iy, ny) = axis(qy, my, source.y, ly);
                    if (nx + ny) as i64 > n {
                        continue;
                    }
                    for qz in 0..2 {
                        for mz in -n..=n {
                            let (iz, nz) = axis(qz, mz, source.z, lz);
                            let order = nx + ny + nz;
                            if order as i64 > n {
                                continue;
                            }
                            f(Vec3::new(ix, iy, iz), order as u32);
                        }
                    }
                }
            }
        }
    }
}

fn check_inside(room: &RoomSpec, what: &str, p: Vec3) -> Result<()> {
    if room.contains(p) {
        Ok(())
    } else {
        Err(Error::InvalidGeometry(format!("{what} {p:?} is outside the room")))
    }
}

fn trim(mut taps: Vec<f64>) -> Vec<f64> {
    while taps.len() > 1 && taps.last() == Some(&0.0) {
        taps.pop();
    }
    taps
}

/// Omnidirectional point-to-point RIR.
pub fn compute_rir(
    room: &RoomSpec,
    source: Vec3,
    mic: Vec3,
    max_order: u32,
    sample_rate: u32,
) -> Result<RoomImpulseResponse> {
    let alpha = room.absorption()?;
    check_inside(room, "source", source)?;
    check_inside(room, "microphone", mic)?;
    if source.distance(mic) == 0.0 {
        return Err(Error::InvalidGeometry("source coincides with microphone".into()));
    }
    let beta = (1.0 - alpha).sqrt();
    let c = room.speed_of_sound;
    let fs = sample_rate as f64;
    let mut taps: Vec<f64> = Vec::new();
    for_each_image(room, source, max_order, |img, order| {
        let d = img.distance(mic);
        let idx = (d / c * fs).round() as usize;
        if idx >= taps.len() {
            taps.resize(idx + 1, 0.0);
        }
        taps[idx] += beta.powi(order as i32) / d;
    });
    Ok(RoomImpulseResponse {
        sample_rate,
        taps: trim(taps),
        channel: None,
    })
}

/// RIR from `source` to one hearing-aid microphone on a spherical head.
///
/// Images are traced to the head centre. Each image then gets the
/// Woodworth ear delay for its lateral angle, the plane-wave delay of the
/// mic's offset from the ear along the arrival direction, and the far-ear
/// shadow shelf. The shelf is linear in its gain, so the response is built
/// as `h_flat + HP(h_shadow)` where `h_shadow` only holds the `(g - 1)`
/// parts; a source on the median plane yields identical ears.
pub fn compute_binaural_rir(
    room: &RoomSpec,
    source: Vec3,
    pose: &ScenePose,
    head: &HeadGeometry,
    channel: ChannelLabel,
    max_order: u32,
    sample_rate: u32,
) -> Result<RoomImpulseResponse> {
    let alpha = room.absorption()?;
    head.validate()?;
    check_inside(room, "source", source)?;
    let centre = pose.receiver_position;
    check_inside(room, "receiver", centre)?;
    if source.distance(centre) <= head.head_radius {
        return Err(Error::InvalidGeometry("source inside the head".into()));
    }
    let model = HeadModel {
        radius: head.head_radius,
        speed_of_sound: room.speed_of_sound,
    };
    let (front, left) = pose.head_axes();
    let ear_offset = {
        let o = head.offset(channel);
        let ear = Vec3::new(0.0, o.y, 0.0);
        (o - ear).rotate_z(pose.receiver_yaw)
    };
    let beta = (1.0 - alpha).sqrt();
    let c = room.speed_of_sound;
    let fs = sample_rate as f64;
    let mut flat: Vec<f64> = Vec::new();
    let mut shadow: Vec<f64> = Vec::new();
    let mut any_shadow = false;
    for_each_image(room, source, max_order, |img, order| {
        let v = img - centre;
        let d = v.norm();
        let u = v * (1.0 / d);
        let azimuth = u.dot(left).atan2(u.dot(front));
        let ear = model.filter(azimuth, channel.ear, fs);
        let t = d / c + ear.delay - ear_offset.dot(u) / c;
        let idx = (t * fs).round().max(0.0) as usize;
        if idx >= flat.len() {
            flat.resize(idx + 1, 0.0);
            shadow.resize(idx + 1, 0.0);
        }
        let a = beta.powi(order as i32) / d;
        flat[idx] += a;
        if ear.shelf_gain != 1.0 {
            shadow[idx] += (ear.shelf_gain - 1.0) * a;
            any_shadow = true;
        }
    });
    if any_shadow {
        let mut hp = OnePoleHighpass::new(model.shadow_corner_hz(), fs);
        for (f, s) in flat.iter_mut().zip(&shadow) {
            *f += hp.tick(*s);
        }
    }
    Ok(RoomImpulseResponse {
        sample_rate,
        taps: trim(flat),
        channel: Some(channel),
    })
}
