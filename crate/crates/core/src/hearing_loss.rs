//! Hearing-loss simulation: per-band attenuation from the audiogram plus an
//! optional loudness-recruitment envelope expansion.

use serde::{Deserialize, Serialize};

use crate::dsp::{self, audiogram_crossovers, BandSplitter};
use crate::error::{Error, Result};
use crate::listener::{Audiogram, MAX_THRESHOLD_DB};
use crate::scene::Ear;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HearingLossConfig {
    /// Loudness recruitment on/off; off gives a pure-attenuation model.
    pub recruitment: bool,
    /// Thresholds up to this level have no effect.
    pub no_effect_db: f64,
    /// Time constant of the zero-phase envelope smoother.
    pub envelope_ms: f64,
    /// Butterworth order of each crossover (magnitude-squared order is 2x).
    pub crossover_order: i32,
}

impl Default for HearingLossConfig {
    fn default() -> Self {
        Self {
            recruitment: true,
            no_effect_db: 10.0,
            envelope_ms: 10.0,
            crossover_order: 3,
        }
    }
}

/// Envelope levels are floored here so silent stretches stay finite.
const ENVELOPE_FLOOR_DB_SPL: f64 = -100.0;

/// Attenuation in dB applied to a band with threshold `hl`.
pub fn band_attenuation_db(hl: f64, cfg: &HearingLossConfig) -> f64 {
    (hl - cfg.no_effect_db).max(0.0)
}

/// Expansion exponent for a band with threshold `hl`.
pub fn recruitment_exponent(hl: f64) -> f64 {
    1.0 + hl / MAX_THRESHOLD_DB
}

/// Extra gain (dB, never positive) applied when the band envelope sits at
/// `level_db_spl`. Expanding the envelope by `p` around full scale makes
/// quiet passages drop away faster than loud ones.
pub fn recruitment_gain_db(hl: f64, level_db_spl: f64) -> f64 {
    let p = recruitment_exponent(hl);
    if p == 1.0 {
        return 0.0;
    }
    let below = (dsp::FULL_SCALE_DB_SPL - level_db_spl.max(ENVELOPE_FLOOR_DB_SPL)).max(0.0);
    -(p - 1.0) * below
}

/// Forward-backward one-pole smoothing of the band power.
fn zero_phase_envelope(x: &[f64], tau_s: f64, fs: f64) -> Vec<f64> {
    let a = (-1.0 / (tau_s * fs)).exp();
    let mut env: Vec<f64> = Vec::with_capacity(x.len());
    let mut s = 0.0;
    for v in x {
        s = a * s + (1.0 - a) * v * v;
        env.push(s);
    }
    let mut s = 0.0;
    for e in env.iter_mut().rev() {
        s = a * s + (1.0 - a) * *e;
        *e = s;
    }
    env
}

pub fn filterbank(sample_rate: u32, cfg: &HearingLossConfig) -> BandSplitter {
    BandSplitter::new(&audiogram_crossovers(), cfg.crossover_order, sample_rate)
}

/// The processed signal band by band; the bands sum to the full output.
pub fn simulate_hearing_loss_bands(
    signal: &[f64],
    audiogram: &Audiogram,
    ear: Ear,
    sample_rate: u32,
    cfg: &HearingLossConfig,
) -> Result<Vec<Vec<f64>>> {
    if signal.is_empty() {
        return Err(Error::InvalidArgument("empty signal".into()));
    }
    audiogram.validate()?;
    let fs = sample_rate as f64;
    let thresholds = audiogram.ear(ear);
    let mut bands = filterbank(sample_rate, cfg).split(signal);
    for (band, &hl) in bands.iter_mut().zip(thresholds) {
        let att = band_attenuation_db(hl, cfg);
        if cfg.recruitment && hl > 0.0 {
            // With the envelope in full-scale power units `e`, the
            // recruitment gain in amplitude is e^((p-1)/2) below full scale.
            let env = zero_phase_envelope(band, cfg.envelope_ms / 1000.0, fs);
            let half = 0.5 * (recruitment_exponent(hl) - 1.0);
            let floor = dsp::spl_to_rms(ENVELOPE_FLOOR_DB_SPL).powi(2);
            let g = dsp::db_to_amplitude(-att);
            for (v, e) in band.iter_mut().zip(env) {
                *v *= g * e.clamp(floor, 1.0).powf(half);
            }
        } else if att > 0.0 {
            let g = dsp::db_to_amplitude(-att);
            band.iter_mut().for_each(|v| *v *= g);
        }
    }
    Ok(bands)
}

pub fn simulate_hearing_loss_with(
    signal: &[f64],
    audiogram: &Audiogram,
    ear: Ear,
    sample_rate: u32,
    cfg: &HearingLossConfig,
) -> Result<Vec<f64>> {
    let bands = simulate_hearing_loss_bands(signal, audiogram, ear, sample_rate, cfg)?;
    let mut out = vec![0.0; signal.len()];
    for b in &bands {
        for (o, v) in out.iter_mut().zip(b) {
            *o += v;
        }
    }
    Ok(out)
}

pub fn simulate_hearing_loss(
    signal: &[f64],
    audiogram: &Audiogram,
    ear: Ear,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    simulate_hearing_loss_with(signal, audiogram, ear, sample_rate, &HearingLossConfig::default())
}
