//! Simulated listening panel.
//!
//! Each simulated listener hears the HL-model version of an enhanced scene.
//! A band-audibility index (coherence-based SNR and level above threshold,
//! importance-weighted over octave bands) sets the expected proportion of
//! words recognised; the response itself is a Beta-Bernoulli draw over the
//! transcript's words. None of this shares code with the predictor's
//! envelope metric, so prediction error against the panel is meaningful.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::corpus::transcript_words;
use crate::dsp::{self, align_by_xcorr, mix_seed, AUDIOGRAM_FREQS};
use crate::enhance::EnhancedOutput;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::hearing_loss::{simulate_hearing_loss_with, HearingLossConfig};
use crate::listener::Audiogram;
use crate::render::SpinSignalSet;
use crate::scene::Ear;

/// Octave-band importance weights (sum to 1).
pub const BAND_IMPORTANCE: [f64; 6] = [0.0617, 0.1671, 0.2373, 0.2648, 0.2142, 0.0549];
/// Normal-hearing detection threshold for an octave band, dB SPL.
pub const NORMAL_BAND_THRESHOLD_DB_SPL: [f64; 6] = [16.0, 9.0, 7.0, 4.0, 0.0, 18.0];

const WELCH_FRAME: usize = 1024;
const WELCH_HOP: usize = 512;
const ACTIVE_RANGE_DB: f64 = 40.0;
const DYNAMIC_RANGE_DB: f64 = 30.0;
const TRANSFER_SLOPE: f64 = 12.0;
const TRANSFER_MIDPOINT: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    pub listener_count: usize,
    pub response_seed: u64,
    pub word_noise_kappa: f64,
    pub hearing_loss: HearingLossConfig,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            listener_count: 50,
            response_seed: 7,
            word_noise_kappa: 20.0,
            hearing_loss: HearingLossConfig::default(),
        }
    }
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.listener_count == 0 {
            return Err(Error::Config("panel needs at least one listener".into()));
        }
        if !(self.word_noise_kappa > 0.0) {
            return Err(Error::Config("word_noise_kappa must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelResponse {
    pub scene_id: String,
    pub listener_id: String,
    pub words_total: usize,
    pub words_correct: usize,
}

impl PanelResponse {
    pub fn si(&self) -> f64 {
        self.words_correct as f64 / self.words_total as f64
    }
}

/// Per-band speech level and SNR of `heard` against `reference`, from
/// Welch cross-spectra over reference-active frames.
fn band_speech_and_snr(reference: &[f64], heard: &[f64], sample_rate: u32) -> [(f64, f64); 6] {
    let fs = sample_rate as f64;
    let lag = align_by_xcorr(reference, heard, (0.05 * fs) as usize);
    let at = |i: usize| -> f64 {
        let j = i as isize + lag;
        if j < 0 || j as usize >= heard.len() {
            0.0
        } else {
            heard[j as usize]
        }
    };
    let w: Vec<f64> = (0..WELCH_FRAME)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / WELCH_FRAME as f64).cos())
        .collect();
    let starts: Vec<usize> = (0..)
        .map(|k| k * WELCH_HOP)
        .take_while(|s| s + WELCH_FRAME <= reference.len())
        .collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| dsp::energy(&reference[s..s + WELCH_FRAME]))
        .collect();
    let max = energies.iter().cloned().fold(0.0, f64::max);
    let floor = max * 10f64.powf(-ACTIVE_RANGE_DB / 10.0);

    let half = WELCH_FRAME / 2 + 1;
    let mut sxx = vec![0.0; half];
    let mut syy = vec![0.0; half];
    let mut sxy = vec![Complex64::new(0.0, 0.0); half];
    let fft = FftPlanner::new().plan_fft_forward(WELCH_FRAME);
    let mut frames = 0usize;
    for (&s, &e) in starts.iter().zip(&energies) {
        if e < floor || e == 0.0 {
            continue;
        }
        frames += 1;
        let mut bx: Vec<Complex64> = (0..WELCH_FRAME)
            .map(|i| Complex64::new(w[i] * reference[s + i], 0.0))
            .collect();
        let mut by: Vec<Complex64> = (0..WELCH_FRAME)
            .map(|i| Complex64::new(w[i] * at(s + i), 0.0))
            .collect();
        fft.process(&mut bx);
        fft.process(&mut by);
        for k in 0..half {
            sxx[k] += bx[k].norm_sqr();
            syy[k] += by[k].norm_sqr();
            sxy[k] += bx[k].conj() * by[k];
        }
    }
    // Mean-square contributed by one-sided bin k, averaged over frames.
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let norm = 2.0 / (frames.max(1) as f64 * WELCH_FRAME as f64 * w2);
    std::array::from_fn(|b| {
        let cf = AUDIOGRAM_FREQS[b];
        let (lo, hi) = (cf / 2f64.sqrt(), cf * 2f64.sqrt());
        let (mut speech, mut noise) = (0.0, 0.0);
        for k in 1..half {
            let f = k as f64 * fs / WELCH_FRAME as f64;
            if f < lo || f >= hi || syy[k] == 0.0 {
                continue;
            }
            let coh = if sxx[k] > 0.0 {
                (sxy[k].norm_sqr() / (sxx[k] * syy[k])).min(1.0)
            } else {
                0.0
            };
            speech += coh * syy[k] * norm;
            noise += (1.0 - coh) * syy[k] * norm;
        }
        let level = dsp::power_to_spl(speech);
        let snr = if noise > 0.0 {
            dsp::power_to_db(speech / noise)
        } else if speech > 0.0 {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        (level, snr)
    })
}

fn band_audibility(level_db_spl: f64, snr_db: f64, threshold_db_spl: f64) -> f64 {
    let effective = snr_db.min(level_db_spl - threshold_db_spl);
    ((effective + DYNAMIC_RANGE_DB / 2.0) / DYNAMIC_RANGE_DB).clamp(0.0, 1.0)
}

/// Importance-weighted band audibility of one ear's signal, in [0, 1].
pub fn audibility_index(reference: &[f64], heard: &[f64], sample_rate: u32) -> f64 {
    band_speech_and_snr(reference, heard, sample_rate)
        .iter()
        .zip(BAND_IMPORTANCE)
        .zip(NORMAL_BAND_THRESHOLD_DB_SPL)
        .map(|((&(level, snr), w), t)| {
            if level.is_nan() || snr.is_nan() {
                0.0
            } else {
                w * band_audibility(level, snr, t)
            }
        })
        .sum()
}

/// Expected proportion of words correct for an audibility index.
pub fn transfer(ai: f64) -> f64 {
    1.0 / (1.0 + (-TRANSFER_SLOPE * (ai - TRANSFER_MIDPOINT)).exp())
}

/// Better-ear word-correct probability for one listener on one scene.
pub fn word_probability(
    spin: &SpinSignalSet,
    enhanced: &EnhancedOutput,
    audiogram: &Audiogram,
    hl: &HearingLossConfig,
) -> Result<f64> {
    if spin.anechoic_target.iter().all(|&v| v == 0.0) {
        return Err(Error::SilentReference);
    }
    let mut best: f64 = 0.0;
    for ear in Ear::BOTH {
        let x = enhanced.ear(ear);
        if x.is_empty() {
            return Err(Error::MalformedInput(format!("enhanced {ear} channel is empty")));
        }
        let heard = simulate_hearing_loss_with(x, audiogram, ear, spin.sample_rate, hl)?;
        best = best.max(audibility_index(&spin.anechoic_target, &heard, spin.sample_rate));
    }
    Ok(transfer(best))
}

/// Words correct out of `words_total` when each word is recognised with a
/// probability drawn once from Beta(kappa p, kappa (1 - p)).
pub fn draw_words<R: Rng>(p: f64, words_total: usize, kappa: f64, rng: &mut R) -> usize {
    let q = if p <= 0.0 {
        0.0
    } else if p >= 1.0 {
        1.0
    } else if kappa.is_infinite() {
        p
    } else {
        Beta::new(kappa * p, kappa * (1.0 - p))
            .expect("positive shape parameters")
            .sample(rng)
    };
    (0..words_total).filter(|_| rng.random_bool(q)).count()
}

pub fn simulate_response<R: Rng>(
    spin: &SpinSignalSet,
    enhanced: &EnhancedOutput,
    audiogram: &Audiogram,
    transcript: &str,
    rng: &mut R,
    cfg: &PanelConfig,
) -> Result<PanelResponse> {
    let words_total = transcript_words(transcript).len();
    if words_total == 0 {
        return Err(Error::InvalidTranscript(format!(
            "scene {} has an empty transcript",
            spin.scene_id
        )));
    }
    let p = word_probability(spin, enhanced, audiogram, &cfg.hearing_loss)?;
    Ok(PanelResponse {
        scene_id: spin.scene_id.clone(),
        listener_id: audiogram.listener_id.clone(),
        words_total,
        words_correct: draw_words(p, words_total, cfg.word_noise_kappa, rng),
    })
}

pub fn response_seed(cfg: &PanelConfig, scene_id: &str, listener_id: &str) -> u64 {
    mix_seed(cfg.response_seed, &["panel", scene_id, listener_id])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub scene_id: String,
    pub listener_id: String,
    pub si_measured: f64,
}

/// Measured SI for every (scene, listener) pair, in scene-major order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PanelTable {
    pub responses: Vec<PanelResponse>,
}

impl PanelTable {
    pub fn rows(&self) -> Vec<PanelRow> {
        self.responses
            .iter()
            .map(|r| PanelRow {
                scene_id: r.scene_id.clone(),
                listener_id: r.listener_id.clone(),
                si_measured: r.si(),
            })
            .collect()
    }

    pub fn mean_si(&self) -> f64 {
        self.responses.iter().map(PanelResponse::si).sum::<f64>() / self.responses.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.rows())
    }

    pub fn write_responses_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.responses)
    }
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_panel_csv(path: &Path) -> Result<Vec<PanelRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Schema(format!("{}: {e}", path.display()))))
        .collect()
}

/// Run the panel over scenes × listeners. `enhanced` returns `None` when
/// an artefact is missing; every missing pair is reported together.
pub fn panel_measure<F>(
    scenes: &[SpinSignalSet],
    listeners: &[Audiogram],
    enhanced: F,
    cfg: &PanelConfig,
    exec: Execution,
) -> Result<PanelTable>
where
    F: Fn(&SpinSignalSet, &Audiogram) -> Result<Option<EnhancedOutput>> + Sync + Send,
{
    cfg.validate()?;
    let pairs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..listeners.len()).map(move |l| (s, l)))
        .collect();
    let results = exec.try_map(&pairs, |&(s, l)| {
        let (spin, listener) = (&scenes[s], &listeners[l]);
        let Some(out) = enhanced(spin, listener)? else {
            return Ok(Err(format!("{}/{}", spin.scene_id, listener.listener_id)));
        };
        let mut rng = ChaCha8Rng::seed_from_u64(response_seed(cfg, &spin.scene_id, &listener.listener_id));
        simulate_response(spin, &out, listener, &spin.transcript, &mut rng, cfg).map(Ok)
    })?;
    let mut missing = Vec::new();
    let mut responses = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(resp) => responses.push(resp),
            Err(m) => missing.push(m),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePanel(missing));
    }
    Ok(PanelTable { responses })
}
