//! Baseline hearing aid: per-ear microphone average, prescription gain and
//! multiband compression, all causal apart from a bounded detector
//! lookahead.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dsp::{self, ButterworthLowpass4, AUDIOGRAM_FREQS};
use crate::error::{Error, Result};
use crate::listener::Audiogram;
use crate::render::SpinSignalSet;
use crate::scene::Ear;
use crate::wav;

/// Hard limit on how far any processing may look ahead.
pub const MAX_LOOKAHEAD_MS: f64 = 5.0;

/// Per-frequency constants of the linear prescription rule.
pub const PRESCRIPTION_K_DB: [f64; 6] = [-17.0, -8.0, 0.0, -1.0, -2.0, -2.0];
pub const MAX_INSERTION_GAIN_DB: f64 = 40.0;

/// Insertion gain (dB) at each audiometric frequency.
pub fn prescribe_gains(audiogram: &Audiogram, ear: Ear) -> [f64; 6] {
    let hl = audiogram.ear(ear);
    let common = 0.05 * (hl[1] + hl[2] + hl[3]);
    std::array::from_fn(|i| {
        (common + 0.31 * hl[i] + PRESCRIPTION_K_DB[i]).clamp(0.0, MAX_INSERTION_GAIN_DB)
    })
}

/// Prescription at an arbitrary frequency, interpolated linearly in
/// log-frequency and held constant beyond the audiogram's range.
pub fn gain_at(gains: &[f64; 6], freq_hz: f64) -> f64 {
    let f = AUDIOGRAM_FREQS;
    if freq_hz <= f[0] {
        return gains[0];
    }
    if freq_hz >= f[5] {
        return gains[5];
    }
    let i = f.iter().rposition(|&g| g <= freq_hz).unwrap();
    let t = (freq_hz / f[i]).log2() / (f[i + 1] / f[i]).log2();
    gains[i] + t * (gains[i + 1] - gains[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProcessorConfig {
    /// Contiguous `(low, high)` band edges in Hz.
    pub bands: Vec<(f64, f64)>,
    pub compression_ratio: Vec<f64>,
    pub attack_ms: f64,
    pub release_ms: f64,
    pub lookahead_ms: f64,
    /// Band level (dB SPL) above which compression starts.
    pub knee_db_spl: f64,
    pub output_channels: usize,
}

impl Default for ProcessorConfig {
    fn default() -> Self {
        let edges: Vec<f64> = (0..=6).map(|i| 125.0 * 2f64.powf(i as f64 + 0.5)).collect();
        let mut bands: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
        bands[0].0 = 125.0;
        Self {
            bands,
            compression_ratio: vec![1.5; 6],
            attack_ms: 5.0,
            release_ms: 50.0,
            lookahead_ms: 2.0,
            knee_db_spl: 55.0,
            output_channels: 2,
        }
    }
}

impl ProcessorConfig {
    /// One band over the whole range; handy for checking the static curve.
    pub fn single_band(ratio: f64) -> Self {
        Self {
            bands: vec![(125.0, 8000.0)],
            compression_ratio: vec![ratio],
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.lookahead_ms > MAX_LOOKAHEAD_MS || self.lookahead_ms < 0.0 {
            return bad(format!(
                "lookahead {} ms must lie in [0, {MAX_LOOKAHEAD_MS}] ms",
                self.lookahead_ms
            ));
        }
        if self.bands.is_empty() || self.bands.len() != self.compression_ratio.len() {
            return bad("need one compression ratio per band".into());
        }
        if self.bands[0].0 > 125.0 || self.bands.last().unwrap().1 < 8000.0 {
            return bad("bands must cover 125 Hz to 8 kHz".into());
        }
        for (i, &(lo, hi)) in self.bands.iter().enumerate() {
            if !(lo > 0.0 && lo < hi) {
                return bad(format!("band {i} ({lo}, {hi}) is empty"));
            }
            if i > 0 && (self.bands[i - 1].1 - lo).abs() > 1e-9 {
                return bad(format!("bands {} and {i} leave a gap or overlap", i - 1));
            }
        }
        if self.compression_ratio.iter().any(|r| !(*r >= 1.0)) {
            return bad("compression ratios must be >= 1".into());
        }
        if !(self.attack_ms > 0.0 && self.release_ms > 0.0) {
            return bad("attack and release must be positive".into());
        }
        if self.output_channels != 2 {
            return bad("the aid has exactly two output channels".into());
        }
        Ok(())
    }

    pub fn crossovers(&self) -> Vec<f64> {
        self.bands[..self.bands.len() - 1].iter().map(|b| b.1).collect()
    }

    pub fn band_centres(&self) -> Vec<f64> {
        self.bands.iter().map(|(lo, hi)| (lo * hi).sqrt()).collect()
    }

    pub fn lookahead_samples(&self, sample_rate: u32) -> usize {
        (self.lookahead_ms / 1000.0 * sample_rate as f64).floor() as usize
    }
}

/// Static input/output curve: gain (dB) for a band at `level` dB SPL.
pub fn compressor_gain_db(level: f64, insertion_gain: f64, ratio: f64, knee: f64) -> f64 {
    insertion_gain - (1.0 - 1.0 / ratio) * (level - knee).max(0.0)
}

/// Causal complementary filterbank: each band is a fourth-order lowpass of
/// what the lower bands left over, so the bands sum exactly to the input.
pub fn causal_split(x: &[f64], crossovers: &[f64], sample_rate: u32) -> Vec<Vec<f64>> {
    let fs = sample_rate as f64;
    let mut rest = x.to_vec();
    let mut bands = Vec::with_capacity(crossovers.len() + 1);
    for &fc in crossovers {
        let mut lp = ButterworthLowpass4::new(fc, fs);
        let band: Vec<f64> = rest.iter().map(|&v| lp.tick(v)).collect();
        for (r, b) in rest.iter_mut().zip(&band) {
            *r -= b;
        }
        bands.push(band);
    }
    bands.push(rest);
    bands
}

const DETECTOR_FLOOR_DB_SPL: f64 = -100.0;
/// Mean-square averaging window in front of the attack/release ballistics.
const DETECTOR_RMS_MS: f64 = 5.0;

fn one_pole(ms: f64, fs: f64) -> f64 {
    (-1.0 / (ms / 1000.0 * fs)).exp()
}

/// Smoothed band level in dB SPL. The detector at `n` sees `band[n + lookahead]`.
pub fn detector_levels(band: &[f64], cfg: &ProcessorConfig, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let ahead = cfg.lookahead_samples(sample_rate);
    let a_rms = one_pole(DETECTOR_RMS_MS, fs);
    let a_att = one_pole(cfg.attack_ms, fs);
    let a_rel = one_pole(cfg.release_ms, fs);
    let mut ms = 0.0;
    let mut level = DETECTOR_FLOOR_DB_SPL;
    (0..band.len())
        .map(|n| {
            let v = band.get(n + ahead).copied().unwrap_or(0.0);
            ms = a_rms * ms + (1.0 - a_rms) * v * v;
            let target = dsp::power_to_spl(ms).max(DETECTOR_FLOOR_DB_SPL);
            let a = if target > level { a_att } else { a_rel };
            level = a * level + (1.0 - a) * target;
            level
        })
        .collect()
}

/// Process one ear's averaged microphone signal.
pub fn process_ear(
    x: &[f64],
    gains: &[f64; 6],
    cfg: &ProcessorConfig,
    sample_rate: u32,
) -> Vec<f64> {
    let bands = causal_split(x, &cfg.crossovers(), sample_rate);
    let mut out = vec![0.0; x.len()];
    for ((band, centre), &ratio) in bands.iter().zip(cfg.band_centres()).zip(&cfg.compression_ratio) {
        let insertion = gain_at(gains, centre);
        if ratio == 1.0 {
            let g = dsp::db_to_amplitude(insertion);
            for (o, v) in out.iter_mut().zip(band) {
                *o += g * v;
            }
            continue;
        }
        let levels = detector_levels(band, cfg, sample_rate);
        for ((o, v), l) in out.iter_mut().zip(band).zip(levels) {
            *o += dsp::db_to_amplitude(compressor_gain_db(l, insertion, ratio, cfg.knee_db_spl)) * v;
        }
    }
    out
}

/// Average of all microphones on one ear.
pub fn mic_average(channels: &[&[f64]]) -> Result<Vec<f64>> {
    let first = channels
        .first()
        .ok_or_else(|| Error::MalformedInput("no microphone channels".into()))?;
    if channels.iter().any(|c| c.len() != first.len()) {
        return Err(Error::MalformedInput("microphone channels differ in length".into()));
    }
    let n = channels.len() as f64;
    Ok((0..first.len())
        .map(|i| channels.iter().map(|c| c[i]).sum::<f64>() / n)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedOutput {
    pub scene_id: String,
    pub listener_id: String,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    /// Output delay relative to the input; the baseline adds none.
    pub processing_latency_samples: usize,
}

impl EnhancedOutput {
    pub fn ear(&self, ear: Ear) -> &[f64] {
        match ear {
            Ear::Left => &self.left,
            Ear::Right => &self.right,
        }
    }

    pub fn file_name(scene_id: &str, listener_id: &str) -> String {
        format!("{scene_id}_{listener_id}_enh.wav")
    }

    pub fn write(&self, dir: &Path, sample_rate: u32) -> Result<std::path::PathBuf> {
        let path = dir.join(Self::file_name(&self.scene_id, &self.listener_id));
        wav::write_wav(&path, sample_rate, &[&self.left, &self.right])?;
        Ok(path)
    }

    pub fn read(dir: &Path, scene_id: &str, listener_id: &str) -> Result<(Self, u32)> {
        let path = dir.join(Self::file_name(scene_id, listener_id));
        let audio = wav::read_wav(&path)?;
        if audio.channels.len() != 2 {
            return Err(Error::format(
                &path,
                format!("expected 2 channels, found {}", audio.channels.len()),
            ));
        }
        let mut ch = audio.channels.into_iter();
        Ok((
            Self {
                scene_id: scene_id.to_string(),
                listener_id: listener_id.to_string(),
                left: ch.next().unwrap(),
                right: ch.next().unwrap(),
                processing_latency_samples: 0,
            },
            audio.sample_rate,
        ))
    }
}

/// Run the baseline aid on a scene for one listener.
pub fn enhance(
    spin: &SpinSignalSet,
    config: &ProcessorConfig,
    audiogram: &Audiogram,
) -> Result<EnhancedOutput> {
    config.validate()?;
    audiogram.validate()?;
    let ears = Ear::BOTH.map(|ear| {
        let channels = spin.ear_channels(ear);
        if channels.is_empty() {
            return Err(Error::MalformedInput(format!(
                "scene {} has no {ear} microphones",
                spin.scene_id
            )));
        }
        let x = mic_average(&channels)?;
        Ok(process_ear(&x, &prescribe_gains(audiogram, ear), config, spin.sample_rate))
    });
    let [left, right] = ears;
    Ok(EnhancedOutput {
        scene_id: spin.scene_id.clone(),
        listener_id: audiogram.listener_id.clone(),
        left: left?,
        right: right?,
        processing_latency_samples: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_fifty_matches_hand_evaluation() {
        let a = Audiogram::flat("x", 50.0);
        let g = prescribe_gains(&a, Ear::Left);
        assert!((g[2] - (0.05 * 150.0 + 0.31 * 50.0 + 0.0)).abs() < 1e-12);
        assert!((g[0] - (7.5 + 15.5 - 17.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_audiogram_floors_to_zero() {
        assert_eq!(prescribe_gains(&Audiogram::flat("x", 0.0), Ear::Right), [0.0; 6]);
    }

    #[test]
    fn gains_are_capped() {
        let g = prescribe_gains(&Audiogram::flat("x", 120.0), Ear::Left);
        assert!(g.iter().all(|&v| v <= MAX_INSERTION_GAIN_DB));
    }

    #[test]
    fn interpolation_hits_grid_points() {
        let g = [0.0, 10.0, 20.0, 30.0, 40.0, 50.0];
        for (f, v) in AUDIOGRAM_FREQS.iter().zip(g) {
            assert!((gain_at(&g, *f) - v).abs() < 1e-12);
        }
        assert!((gain_at(&g, 707.106_781_186_547_5) - 15.0).abs() < 1e-9);
        assert_eq!(gain_at(&g, 100.0), 0.0);
        assert_eq!(gain_at(&g, 12_000.0), 50.0);
    }

    #[test]
    fn default_config_is_valid() {
        ProcessorConfig::default().validate().unwrap();
        assert_eq!(ProcessorConfig::default().band_centres().len(), 6);
    }

    #[test]
    fn excessive_lookahead_is_rejected() {
        let cfg = ProcessorConfig {
            lookahead_ms: 6.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn gapped_bands_are_rejected() {
        let mut cfg = ProcessorConfig::default();
        cfg.bands[2].0 += 10.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn causal_bands_sum_to_input() {
        let x: Vec<f64> = (0..2000).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let bands = causal_split(&x, &ProcessorConfig::default().crossovers(), 44_100);
        for i in 0..x.len() {
            let s: f64 = bands.iter().map(|b| b[i]).sum();
            assert!((s - x[i]).abs() < 1e-12);
        }
    }
}
