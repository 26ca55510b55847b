//! Baseline intelligibility predictor: a short-time envelope-correlation
//! metric against the clean reference, mapped through a logistic curve.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, align_by_xcorr, resample};
use crate::enhance::EnhancedOutput;
use crate::error::{Error, Result};
use crate::hearing_loss::{simulate_hearing_loss_with, HearingLossConfig};
use crate::listener::Audiogram;
use crate::render::SpinSignalSet;
use crate::scene::Ear;

pub const ANALYSIS_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const BANDS: usize = 15;
const LOWEST_CENTRE_HZ: f64 = 150.0;
/// 30 frames of 12.8 ms hop = 384 ms.
const SEGMENT: usize = 30;
const CLIP_DB: f64 = -15.0;
const SILENCE_RANGE_DB: f64 = 40.0;
const MAX_ALIGN_S: f64 = 0.05;
const MAX_LENGTH_MISMATCH: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntelligibilityScore {
    pub scene_id: String,
    pub listener_id: String,
    pub score: f64,
}

fn hann(n: usize) -> Vec<f64> {
    // Periodic Hann over n+2 points with the zero end-points dropped.
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..).map(|k| k * HOP).take_while(move |s| s + FRAME <= len)
}

/// Drop frames whose reference energy is more than 40 dB below the loudest
/// one, rebuilding both signals by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = hann(FRAME);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + f64::EPSILON).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, e)| max - **e < SILENCE_RANGE_DB)
        .map(|(s, _)| *s)
        .collect();
    let out_len = (keep.len().saturating_sub(1)) * HOP + FRAME;
    let mut xo = vec![0.0; if keep.is_empty() { 0 } else { out_len }];
    let mut yo = xo.clone();
    for (j, &s) in keep.iter().enumerate() {
        let o = j * HOP;
        for i in 0..FRAME {
            xo[o + i] += w[i] * x[s + i];
            yo[o + i] += w[i] * y[s + i];
        }
    }
    (xo, yo)
}

/// Third-octave band magnitudes, `[band][frame]`.
fn band_envelopes(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<Vec<f64>> {
    let w = hann(FRAME);
    let fft = planner.plan_fft_forward(NFFT);
    let edges: Vec<(usize, usize)> = (0..BANDS)
        .map(|k| {
            let cf = LOWEST_CENTRE_HZ * 2f64.powf(k as f64 / 3.0);
            let bin = |f: f64| (f * NFFT as f64 / ANALYSIS_RATE as f64).round() as usize;
            (bin(cf * 2f64.powf(-1.0 / 6.0)), bin(cf * 2f64.powf(1.0 / 6.0)))
        })
        .collect();
    let mut out = vec![Vec::new(); BANDS];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for s in frame_starts(x.len()) {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex64::new(w[i] * x[s + i], 0.0);
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in edges.iter().enumerate() {
            let p: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[b].push(p.sqrt());
        }
    }
    out
}

fn segment_correlation(x: &[f64], y: &[f64]) -> Option<f64> {
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bound = dsp::db_to_amplitude(-CLIP_DB);
    let y: Vec<f64> = if ny > 0.0 {
        let a = nx / ny;
        x.iter().zip(y).map(|(xv, yv)| (a * yv).min((1.0 + bound) * xv)).collect()
    } else {
        y.to_vec()
    };
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 {
        return None;
    }
    if syy == 0.0 {
        return Some(0.0);
    }
    Some(sxy / (sxx.sqrt() * syy.sqrt()))
}

/// Time-align `degraded` to `reference` (±50 ms) and trim both to their
/// common length.
pub fn align(reference: &[f64], degraded: &[f64], sample_rate: u32) -> Result<(Vec<f64>, Vec<f64>)> {
    let max_lag = (MAX_ALIGN_S * sample_rate as f64).round() as usize;
    let lag = align_by_xcorr(reference, degraded, max_lag);
    let shifted: Vec<f64> = if lag >= 0 {
        degraded[(lag as usize).min(degraded.len())..].to_vec()
    } else {
        std::iter::repeat_n(0.0, lag.unsigned_abs())
            .chain(degraded.iter().copied())
            .collect()
    };
    let (lr, ld) = (reference.len() as f64, shifted.len() as f64);
    if (lr - ld).abs() > MAX_LENGTH_MISMATCH * lr {
        return Err(Error::AlignmentFailure(format!(
            "lengths differ by {:.1}% after alignment",
            100.0 * (lr - ld).abs() / lr
        )));
    }
    let n = reference.len().min(shifted.len());
    Ok((reference[..n].to_vec(), shifted[..n].to_vec()))
}

/// Envelope-correlation intelligibility index in [-1, 1].
pub fn envelope_metric(reference: &[f64], degraded: &[f64], sample_rate: u32) -> Result<f64> {
    if reference.iter().all(|&v| v == 0.0) {
        return Err(Error::SilentReference);
    }
    if degraded.is_empty() {
        return Err(Error::AlignmentFailure("degraded signal is empty".into()));
    }
    let x = resample(reference, sample_rate, ANALYSIS_RATE);
    let y = resample(degraded, sample_rate, ANALYSIS_RATE);
    let (x, y) = align(&x, &y, ANALYSIS_RATE)?;
    let (x, y) = remove_silent_frames(&x, &y);
    let mut planner = FftPlanner::new();
    let ex = band_envelopes(&x, &mut planner);
    let ey = band_envelopes(&y, &mut planner);
    let frames = ex[0].len();
    if frames < SEGMENT {
        return Err(Error::MalformedInput(format!(
            "only {frames} active analysis frames; need at least {SEGMENT}"
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for m in SEGMENT..=frames {
        for b in 0..BANDS {
            if let Some(c) = segment_correlation(&ex[b][m - SEGMENT..m], &ey[b][m - SEGMENT..m]) {
                sum += c;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::SilentReference);
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticMap {
    pub a: f64,
    pub b: f64,
}

impl Default for LogisticMap {
    fn default() -> Self {
        Self { a: 10.0, b: 0.55 }
    }
}

impl LogisticMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::Config(format!("logistic slope must be positive, got {}", self.a)));
        }
        Ok(())
    }

    pub fn apply(&self, d: f64) -> f64 {
        1.0 / (1.0 + (-self.a * (d - self.b)).exp())
    }
}

pub fn map_to_intelligibility(d: f64, map: &LogisticMap) -> f64 {
    map.apply(d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub map: LogisticMap,
    pub mse: f64,
}

pub fn logistic_mse(map: &LogisticMap, pairs: &[(f64, f64)]) -> f64 {
    pairs.iter().map(|&(d, y)| (map.apply(d) - y).powi(2)).sum::<f64>() / pairs.len() as f64
}

/// Minimise `f` from `start` with the Nelder-Mead simplex.
fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2]) -> [f64; 2] {
    let mut simplex = [start, [start[0] + step[0], start[1]], [start[0], start[1] + step[1]]];
    let mut values = simplex.map(&f);
    for _ in 0..5000 {
        let mut idx = [0, 1, 2];
        idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = idx.map(|i| simplex[i]);
        values = idx.map(|i| values[i]);
        let spread = (values[2] - values[0]).abs();
        let size = (0..2)
            .map(|k| (simplex[2][k] - simplex[0][k]).abs().max((simplex[1][k] - simplex[0][k]).abs()))
            .fold(0.0, f64::max);
        if spread < 1e-16 && size < 1e-10 {
            break;
        }
        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let (contracted, fc) = if fr < values[2] {
                let c = along(-0.5);
                (c, f(c))
            } else {
                let c = along(0.5);
                (c, f(c))
            };
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    for k in 0..2 {
                        simplex[i][k] = simplex[0][k] + 0.5 * (simplex[i][k] - simplex[0][k]);
                    }
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    simplex[best]
}

/// Least-squares logistic fit: coarse grid, then simplex refinement in
/// `(ln a, b)`.
pub fn fit_logistic(pairs: &[(f64, f64)]) -> Result<LogisticFit> {
    if pairs.len() < 10 {
        return Err(Error::FitFailure(format!("need at least 10 pairs, got {}", pairs.len())));
    }
    if pairs.iter().any(|(d, y)| !d.is_finite() || !y.is_finite()) {
        return Err(Error::FitFailure("non-finite pair".into()));
    }
    let (dmin, dmax) = pairs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(d, _)| (lo.min(d), hi.max(d)));
    if dmax - dmin < 0.2 {
        return Err(Error::FitFailure(format!(
            "metric values span only {:.3}; need at least 0.2",
            dmax - dmin
        )));
    }
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let ymean = ys.iter().sum::<f64>() / ys.len() as f64;
    if ys.iter().all(|&y| (y - ymean).abs() < 1e-12) {
        return Err(Error::FitFailure("measured scores are constant".into()));
    }
    let cost = |p: [f64; 2]| {
        logistic_mse(
            &LogisticMap {
                a: p[0].exp(),
                b: p[1],
            },
            pairs,
        )
    };
    let span = dmax - dmin;
    let mut best = ([0.0, 0.0], f64::INFINITY);
    for i in 0..=40 {
        let ln_a = (0.1f64).ln() + i as f64 * ((200.0f64).ln() - (0.1f64).ln()) / 40.0;
        for j in 0..=40 {
            let b = dmin - span + j as f64 * 3.0 * span / 40.0;
            let c = cost([ln_a, b]);
            if c < best.1 {
                best = ([ln_a, b], c);
            }
        }
        // Midpoint that reproduces the mean score at the mean metric value,
        // so nearly flat curves far from 0.5 are on the grid too.
        let dmean = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
        let q = ymean.clamp(1e-3, 1.0 - 1e-3);
        let b = dmean - (q / (1.0 - q)).ln() / ln_a.exp();
        let c = cost([ln_a, b]);
        if c < best.1 {
            best = ([ln_a, b], c);
        }
    }
    let p = nelder_mead(cost, best.0, [0.1, 0.05 * span]);
    let p = nelder_mead(cost, p, [0.01, 0.005 * span]);
    let map = LogisticMap {
        a: p[0].exp(),
        b: p[1],
    };
    if !(map.a > 1e-3) || !map.b.is_finite() {
        return Err(Error::FitFailure(format!("degenerate slope {}", map.a)));
    }
    let mse = logistic_mse(&map, pairs);
    let constant = ys.iter().map(|y| (y - ymean).powi(2)).sum::<f64>() / ys.len() as f64;
    if mse > constant {
        return Err(Error::FitFailure(
            "scores do not increase with the metric; no logistic beats the mean".into(),
        ));
    }
    Ok(LogisticFit { mse, map })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinauralRule {
    BetterEar,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub map: LogisticMap,
    pub hearing_loss: HearingLossConfig,
    pub binaural: BinauralRule,
    /// Level of the white noise standing in for absolute threshold.
    pub audibility_floor_db_spl: f64,
    pub floor_seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            map: LogisticMap::default(),
            hearing_loss: HearingLossConfig::default(),
            binaural: BinauralRule::BetterEar,
            audibility_floor_db_spl: 25.0,
            floor_seed: 0xF100,
        }
    }
}

/// Fixed noise added to the HL-model output so inaudible speech stops
/// correlating with the reference.
pub fn audibility_floor(len: usize, level_db_spl: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = dsp::spl_to_rms(level_db_spl);
    (0..len).map(|_| g * { let z: f64 = StandardNormal.sample(&mut rng); z }).collect::<Vec<f64>>()
}

/// Per-ear metric values `[left, right]`.
pub fn ear_metrics(
    spin: &SpinSignalSet,
    enhanced: &EnhancedOutput,
    audiogram: &Audiogram,
    cfg: &PredictConfig,
) -> Result<[f64; 2]> {
    let fs = spin.sample_rate;
    let mut out = [0.0; 2];
    for (slot, ear) in out.iter_mut().zip(Ear::BOTH) {
        let x = enhanced.ear(ear);
        if x.is_empty() {
            return Err(Error::MalformedInput(format!("enhanced {ear} channel is empty")));
        }
        let mut heard = simulate_hearing_loss_with(x, audiogram, ear, fs, &cfg.hearing_loss)?;
        let floor = audibility_floor(heard.len(), cfg.audibility_floor_db_spl, cfg.floor_seed);
        heard.iter_mut().zip(floor).for_each(|(h, n)| *h += n);
        *slot = envelope_metric(&spin.anechoic_target, &heard, fs)?;
    }
    Ok(out)
}

/// Predicted fraction of words correct. Never looks at the transcript.
pub fn predict(
    spin: &SpinSignalSet,
    enhanced: &EnhancedOutput,
    audiogram: &Audiogram,
    cfg: &PredictConfig,
) -> Result<IntelligibilityScore> {
    cfg.map.validate()?;
    let [l, r] = ear_metrics(spin, enhanced, audiogram, cfg)?;
    let d = match cfg.binaural {
        BinauralRule::BetterEar => l.max(r),
        BinauralRule::Mean => 0.5 * (l + r),
    };
    Ok(IntelligibilityScore {
        scene_id: spin.scene_id.clone(),
        listener_id: audiogram.listener_id.clone(),
        score: map_to_intelligibility(d, &cfg.map),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speechy(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let t = i as f64 / 10_000.0;
                let env = (2.0 * PI * 4.0 * t).sin().abs();
                env * { let z: f64 = StandardNormal.sample(&mut rng); z }
            })
            .collect()
    }

    #[test]
    fn identical_signals_score_one() {
        let x = speechy(20_000, 1);
        let d = envelope_metric(&x, &x, 10_000).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
    }

    #[test]
    fn scaling_leaves_metric_unchanged() {
        let x = speechy(20_000, 2);
        let noise = speechy(20_000, 3);
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + 0.5 * b).collect();
        let d1 = envelope_metric(&x, &y, 10_000).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| v * 37.5).collect();
        let d2 = envelope_metric(&x, &y2, 10_000).unwrap();
        assert!((d1 - d2).abs() < 1e-9, "{d1} {d2}");
    }

    #[test]
    fn silent_reference_is_rejected() {
        let x = vec![0.0; 20_000];
        assert!(matches!(envelope_metric(&x, &x, 10_000), Err(Error::SilentReference)));
    }

    #[test]
    fn short_degraded_fails_alignment() {
        let x = speechy(20_000, 4);
        assert!(matches!(
            envelope_metric(&x, &x[..15_000], 10_000),
            Err(Error::AlignmentFailure(_))
        ));
    }

    #[test]
    fn midpoint_maps_to_half() {
        let m = LogisticMap { a: 7.0, b: 0.4 };
        assert!((map_to_intelligibility(0.4, &m) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn noiseless_fit_recovers_parameters() {
        let truth = LogisticMap { a: 8.0, b: 0.6 };
        let pairs: Vec<(f64, f64)> = (0..40)
            .map(|i| {
                let d = 0.1 + 0.8 * i as f64 / 39.0;
                (d, truth.apply(d))
            })
            .collect();
        let fit = fit_logistic(&pairs).unwrap();
        assert!((fit.map.a / 8.0 - 1.0).abs() < 0.02, "{:?}", fit.map);
        assert!((fit.map.b / 0.6 - 1.0).abs() < 0.02, "{:?}", fit.map);
    }

    #[test]
    fn constant_scores_cannot_be_fitted() {
        let pairs: Vec<(f64, f64)> = (0..20).map(|i| (i as f64 / 20.0, 0.4)).collect();
        assert!(matches!(fit_logistic(&pairs), Err(Error::FitFailure(_))));
        let flat_d: Vec<(f64, f64)> = (0..20).map(|i| (0.5, i as f64 / 20.0)).collect();
        assert!(matches!(fit_logistic(&flat_d), Err(Error::FitFailure(_))));
    }
}
