//! Rigid-sphere head: Woodworth interaural delay plus a first-order
//! high-shelf shadow on the far ear.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::geometry::Ear;
use crate::dsp::OnePoleHighpass;

/// Smallest high-frequency gain of the shadow shelf (-20 dB), reached for
/// a source directly to the side.
pub const MIN_SHADOW_GAIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub radius: f64,
    pub speed_of_sound: f64,
}

impl Default for HeadModel {
    fn default() -> Self {
        Self {
            radius: 0.0875,
            speed_of_sound: 343.0,
        }
    }
}

/// Per-ear response of the head to a far-field source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadFilter {
    /// Arrival time relative to the head centre, seconds.
    pub delay: f64,
    /// High-frequency gain of the shelf; 1.0 leaves the ear unfiltered.
    pub shelf_gain: f64,
    pub corner_hz: f64,
    pub sample_rate: f64,
}

/// Fold an azimuth onto the lateral angle in `[-pi/2, pi/2]`.
pub fn lateral_angle(azimuth: f64) -> f64 {
    if azimuth > FRAC_PI_2 {
        PI - azimuth
    } else if azimuth < -FRAC_PI_2 {
        -PI - azimuth
    } else {
        azimuth
    }
}

impl HeadModel {
    /// Woodworth ITD, `t_right - t_left`; positive when the source is on
    /// the left (positive azimuth).
    pub fn itd(&self, azimuth: f64) -> f64 {
        let t = lateral_angle(azimuth);
        self.radius / self.speed_of_sound * (t + t.sin())
    }

    /// Shelf corner of the shadow filter, `c / (pi a)`.
    pub fn shadow_corner_hz(&self) -> f64 {
        self.speed_of_sound / (PI * self.radius)
    }

    pub fn filter(&self, azimuth: f64, ear: Ear, sample_rate: f64) -> HeadFilter {
        let lateral = lateral_angle(azimuth);
        let itd = self.itd(azimuth);
        // The ear on the source side leads by half the ITD.
        let delay = -ear.side() * itd / 2.0;
        let contralateral = lateral * ear.side() < 0.0;
        let shelf_gain = if contralateral {
            1.0 - (1.0 - MIN_SHADOW_GAIN) * lateral.sin().abs()
        } else {
            1.0
        };
        HeadFilter {
            delay,
            shelf_gain,
            corner_hz: self.shadow_corner_hz(),
            sample_rate,
        }
    }
}

/// Head filter for the default sphere (a = 8.75 cm, c = 343 m/s).
pub fn binaural_head_filter(azimuth: f64, ear: Ear, sample_rate: f64) -> HeadFilter {
    HeadModel::default().filter(azimuth, ear, sample_rate)
}

impl HeadFilter {
    /// Magnitude of the shelf at `f` Hz: `1 + (g - 1) HP(f)`.
    pub fn gain_at(&self, f: f64) -> f64 {
        let k = (PI * self.corner_hz / self.sample_rate).tan();
        let w = (PI * f / self.sample_rate).tan();
        let g = self.shelf_gain;
        ((g * w).powi(2) + k * k).sqrt() / (w * w + k * k).sqrt()
    }

    /// Sampled magnitude curve over `freqs`.
    pub fn shadow_gain_curve(&self, freqs: &[f64]) -> Vec<f64> {
        freqs.iter().map(|&f| self.gain_at(f)).collect()
    }

    /// Shelf only, no delay: `x + (g - 1) HP(x)`.
    pub fn apply_shelf(&self, x: &[f64]) -> Vec<f64> {
        if self.shelf_gain == 1.0 {
            return x.to_vec();
        }
        let mut hp = OnePoleHighpass::new(self.corner_hz, self.sample_rate);
        let k = self.shelf_gain - 1.0;
        x.iter().map(|&v| v + k * hp.tick(v)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_plane_is_symmetric() {
        let l = binaural_head_filter(0.0, Ear::Left, 44_100.0);
        let r = binaural_head_filter(0.0, Ear::Right, 44_100.0);
        assert_eq!(l.delay, 0.0);
        assert_eq!(r.delay, 0.0);
        assert_eq!(l.shelf_gain, r.shelf_gain);
        assert_eq!(HeadModel::default().itd(0.0), 0.0);
    }

    #[test]
    fn side_source_itd_is_woodworth() {
        let itd = HeadModel::default().itd(FRAC_PI_2);
        // (0.0875 / 343) * (pi/2 + 1) = 6.5587e-4 s
        assert!((itd - 6.5587e-4).abs() < 1e-7, "{itd}");
    }

    #[test]
    fn itd_is_antisymmetric_and_peaks_at_the_side() {
        let h = HeadModel::default();
        let peak = h.itd(FRAC_PI_2);
        for i in 0..=72 {
            let theta = -PI + i as f64 * PI / 36.0;
            assert!((h.itd(theta) + h.itd(-theta)).abs() < 1e-18);
            assert!(h.itd(theta).abs() <= peak + 1e-18);
        }
    }

    #[test]
    fn only_far_ear_is_shadowed() {
        let near = binaural_head_filter(FRAC_PI_2, Ear::Left, 44_100.0);
        let far = binaural_head_filter(FRAC_PI_2, Ear::Right, 44_100.0);
        assert_eq!(near.shelf_gain, 1.0);
        assert!((far.shelf_gain - MIN_SHADOW_GAIN).abs() < 1e-12);
        assert!(far.delay > 0.0 && near.delay < 0.0);
        assert!((far.gain_at(50.0) - 1.0).abs() < 0.01);
        assert!(far.gain_at(15_000.0) < 0.15);
        assert!((near.gain_at(15_000.0) - 1.0).abs() < 1e-12);
    }
}
