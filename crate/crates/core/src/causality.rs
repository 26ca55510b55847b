//! Black-box causality verification for hearing-aid processors.
//!
//! A processor passes when changing its input after time `t` never changes
//! its output before `t - max_lookahead`. Pairs of probe inputs that agree up
//! to `t` and differ afterwards are pushed through the processor for a grid
//! of cut points; the earliest output divergence gives the lookahead.

use std::path::PathBuf;
use std::process::Command;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dsp;
use crate::enhance::{self, ProcessorConfig, MAX_LOOKAHEAD_MS};
use crate::error::{Error, Result};
use crate::listener::Audiogram;
use crate::scene::{ChannelLabel, Ear};
use crate::wav;

/// A multichannel signal transform under test. Calls are serialised, so
/// implementations may keep state.
pub trait Processor {
    fn input_channels(&self) -> usize;
    fn process(&mut self, input: &[Vec<f64>], sample_rate: u32) -> Result<Vec<Vec<f64>>>;
}

/// Simple known-lookahead transforms, applied channel by channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Passthrough,
    /// `y[n] = x[n - d]`
    Delay(usize),
    /// `y[n] = x[n + d]`
    Advance(usize),
    /// Symmetric moving average, `half_width` samples either side.
    Smoother(usize),
}

impl Transform {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= n {
                0.0
            } else {
                x[i as usize]
            }
        };
        match *self {
            Transform::Passthrough => x.to_vec(),
            Transform::Delay(d) => (0..n).map(|i| at(i as isize - d as isize)).collect(),
            Transform::Advance(d) => (0..n).map(|i| at(i as isize + d as isize)).collect(),
            Transform::Smoother(h) => {
                // Prefix sums keep this linear in the signal length.
                let w = 1.0 / (2 * h + 1) as f64;
                let mut prefix = Vec::with_capacity(n + 1);
                prefix.push(0.0);
                let mut acc = 0.0;
                for v in x {
                    acc += v;
                    prefix.push(acc);
                }
                (0..n)
                    .map(|i| (prefix[(i + h + 1).min(n)] - prefix[i.saturating_sub(h)]) * w)
                    .collect()
            }
        }
    }

    /// True lookahead in samples.
    pub fn lookahead(&self) -> usize {
        match *self {
            Transform::Passthrough | Transform::Delay(_) => 0,
            Transform::Advance(d) | Transform::Smoother(d) => d,
        }
    }
}

/// Parses `passthrough`, `delay:<ms>`, `advance:<ms>`, `smoother:<ms>` at
/// 44.1 kHz, rounded down to whole samples; a trailing `s` on the number
/// (`advance:265s`) means samples.
impl FromStr for Transform {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad transform `{s}`"));
        if s == "passthrough" {
            return Ok(Transform::Passthrough);
        }
        let (kind, amount) = s.split_once(':').ok_or_else(bad)?;
        let samples = if let Some(n) = amount.strip_suffix('s') {
            n.parse::<usize>().map_err(|_| bad())?
        } else {
            let ms: f64 = amount.trim_end_matches("ms").parse().map_err(|_| bad())?;
            if !(ms >= 0.0) {
                return Err(bad());
            }
            // Whole samples not exceeding the stated time, so `advance:5` is
            // at most 5 ms ahead.
            (ms / 1000.0 * dsp::SAMPLE_RATE as f64 + 1e-9).floor() as usize
        };
        match kind {
            "delay" => Ok(Transform::Delay(samples)),
            "advance" => Ok(Transform::Advance(samples)),
            "smoother" => Ok(Transform::Smoother(samples)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransformProcessor {
    pub transform: Transform,
    pub channels: usize,
}

impl Processor for TransformProcessor {
    fn input_channels(&self) -> usize {
        self.channels
    }

    fn process(&mut self, input: &[Vec<f64>], _sample_rate: u32) -> Result<Vec<Vec<f64>>> {
        Ok(input.iter().map(|x| self.transform.apply(x)).collect())
    }
}

/// The baseline aid seen as a black box: microphone channels in (left mics
/// then right mics), two ear signals out.
#[derive(Debug, Clone)]
pub struct BaselineProcessor {
    pub config: ProcessorConfig,
    pub audiogram: Audiogram,
    pub channels: Vec<ChannelLabel>,
}

impl Processor for BaselineProcessor {
    fn input_channels(&self) -> usize {
        self.channels.len()
    }

    fn process(&mut self, input: &[Vec<f64>], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
        self.config.validate()?;
        if input.len() != self.channels.len() {
            return Err(Error::MalformedInput(format!(
                "expected {} channels, got {}",
                self.channels.len(),
                input.len()
            )));
        }
        Ok(Ear::BOTH
            .iter()
            .map(|&ear| {
                let mics: Vec<&[f64]> = self
                    .channels
                    .iter()
                    .zip(input)
                    .filter(|(l, _)| l.ear == ear)
                    .map(|(_, x)| x.as_slice())
                    .collect();
                let x = enhance::mic_average(&mics)?;
                let gains = enhance::prescribe_gains(&self.audiogram, ear);
                Ok(enhance::process_ear(&x, &gains, &self.config, sample_rate))
            })
            .collect::<Result<Vec<_>>>()?)
    }
}

/// An external program invoked as `<program> <args..> <input.wav> <output.wav>`.
#[derive(Debug, Clone)]
pub struct CommandProcessor {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub channels: usize,
}

impl Processor for CommandProcessor {
    fn input_channels(&self) -> usize {
        self.channels
    }

    fn process(&mut self, input: &[Vec<f64>], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
        let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let inp = dir.path().join("in.wav");
        let out = dir.path().join("out.wav");
        let refs: Vec<&[f64]> = input.iter().map(Vec::as_slice).collect();
        wav::write_wav(&inp, sample_rate, &refs)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&inp)
            .arg(&out)
            .status()
            .map_err(|e| Error::io(&self.program, e))?;
        if !status.success() {
            return Err(Error::ProcessorFailed(format!(
                "{} exited with {status}",
                self.program.display()
            )));
        }
        Ok(wav::read_wav(&out)?.channels)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausalityReport {
    pub passed: bool,
    pub measured_lookahead_samples: usize,
    pub measured_lookahead_ms: f64,
    pub max_lookahead_ms: f64,
    pub probes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub duration_s: f64,
    pub cut_points: usize,
    /// Probe noise level in dB SPL.
    pub level_db_spl: f64,
    /// Relative (to output peak) difference treated as a real divergence.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            duration_s: 2.0,
            cut_points: 50,
            level_db_spl: 65.0,
            tolerance: 1e-5,
            seed: 0x5eed,
        }
    }
}

fn probe_noise(channels: usize, len: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..channels)
        .map(|_| {
            (0..len)
                .map(|_| rms * { let z: f64 = StandardNormal.sample(rng); z })
                .collect::<Vec<f64>>()
        })
        .collect()
}

fn first_divergence(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> Result<Option<usize>> {
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.len() != y.len()) {
        return Err(Error::ProcessorFailed("output shape changed between calls".into()));
    }
    Ok(a.iter()
        .zip(b)
        .filter_map(|(x, y)| x.iter().zip(y).position(|(p, q)| (p - q).abs() > tol))
        .min())
}

pub fn verify_causality(
    processor: &mut dyn Processor,
    sample_rate: u32,
    max_lookahead_ms: f64,
) -> Result<CausalityReport> {
    verify_causality_with(processor, sample_rate, max_lookahead_ms, &ProbeConfig::default())
}

pub fn verify_causality_with(
    processor: &mut dyn Processor,
    sample_rate: u32,
    max_lookahead_ms: f64,
    probe: &ProbeConfig,
) -> Result<CausalityReport> {
    let fs = sample_rate as f64;
    let len = (probe.duration_s * fs).round() as usize;
    let channels = processor.input_channels();
    let rms = dsp::spl_to_rms(probe.level_db_spl);
    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let base = probe_noise(channels, len, rms, &mut rng);

    let reference = processor.process(&base, sample_rate)?;
    let again = processor.process(&base, sample_rate)?;
    let peak = reference.iter().map(|c| dsp::peak(c)).fold(0.0, f64::max);
    let tol = probe.tolerance * peak.max(f64::MIN_POSITIVE);
    if first_divergence(&reference, &again, 0.0)?.is_some() {
        return Err(Error::CannotVerify);
    }

    let mut worst = 0usize;
    for k in 0..probe.cut_points {
        let cut = ((k as f64 + 0.5) * len as f64 / probe.cut_points as f64) as usize;
        let fresh = probe_noise(channels, len - cut, rms, &mut rng);
        let altered: Vec<Vec<f64>> = base
            .iter()
            .zip(&fresh)
            .map(|(b, f)| b[..cut].iter().chain(f).copied().collect())
            .collect();
        let out = processor.process(&altered, sample_rate)?;
        if let Some(n) = first_divergence(&reference, &out, tol)? {
            worst = worst.max(cut.saturating_sub(n));
        }
    }
    let limit = max_lookahead_ms / 1000.0 * fs;
    Ok(CausalityReport {
        passed: worst as f64 <= limit,
        measured_lookahead_samples: worst,
        measured_lookahead_ms: worst as f64 / fs * 1000.0,
        max_lookahead_ms,
        probes: probe.cut_points,
    })
}

/// Check against the standard limit and turn a failure into a rules error.
pub fn require_causal(
    entry_id: &str,
    processor: &mut dyn Processor,
    sample_rate: u32,
) -> Result<CausalityReport> {
    let report = verify_causality(processor, sample_rate, MAX_LOOKAHEAD_MS)?;
    if !report.passed {
        return Err(Error::Disqualified {
            entry_id: entry_id.to_string(),
            lookahead_ms: report.measured_lookahead_ms,
            limit_ms: MAX_LOOKAHEAD_MS,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ProbeConfig {
        ProbeConfig {
            duration_s: 0.25,
            cut_points: 10,
            ..Default::default()
        }
    }

    fn check(t: Transform) -> CausalityReport {
        let mut p = TransformProcessor {
            transform: t,
            channels: 1,
        };
        verify_causality_with(&mut p, 44_100, 5.0, &quick()).unwrap()
    }

    #[test]
    fn delay_passes() {
        let r = check("delay:10".parse().unwrap());
        assert!(r.passed);
        assert_eq!(r.measured_lookahead_samples, 0);
    }

    #[test]
    fn six_ms_advance_fails_at_six_ms() {
        let r = check("advance:6".parse().unwrap());
        assert!(!r.passed);
        assert!((r.measured_lookahead_ms - 6.0).abs() < 1.0 / 44.1);
    }

    #[test]
    fn four_ms_smoother_passes() {
        let r = check("smoother:4".parse().unwrap());
        assert!(r.passed);
        assert_eq!(r.measured_lookahead_samples, 176);
    }

    struct Flaky(u64);
    impl Processor for Flaky {
        fn input_channels(&self) -> usize {
            1
        }
        fn process(&mut self, input: &[Vec<f64>], _: u32) -> Result<Vec<Vec<f64>>> {
            self.0 += 1;
            let k = self.0 as f64;
            Ok(input.iter().map(|x| x.iter().map(|v| v * k).collect()).collect())
        }
    }

    #[test]
    fn nondeterminism_cannot_be_verified() {
        assert!(matches!(
            verify_causality_with(&mut Flaky(0), 44_100, 5.0, &quick()),
            Err(Error::CannotVerify)
        ));
    }

    #[test]
    fn disqualification_is_a_rules_error() {
        let mut p = TransformProcessor {
            transform: Transform::Advance(300),
            channels: 1,
        };
        let e = require_causal("e1", &mut p, 44_100).unwrap_err();
        assert_eq!(e.class(), crate::ErrorClass::Rules);
    }

    #[test]
    fn smoother_matches_the_direct_sum() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 37) % 23) as f64 - 11.0).collect();
        let h = 7;
        let direct: Vec<f64> = (0..x.len() as isize)
            .map(|i| {
                (i - h..=i + h)
                    .filter(|&j| j >= 0 && (j as usize) < x.len())
                    .map(|j| x[j as usize])
                    .sum::<f64>()
                    / (2 * h + 1) as f64
            })
            .collect();
        for (a, b) in Transform::Smoother(h as usize).apply(&x).iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transform_parsing() {
        assert_eq!("advance:265s".parse::<Transform>().unwrap(), Transform::Advance(265));
        assert_eq!("smoother:4".parse::<Transform>().unwrap(), Transform::Smoother(176));
        assert_eq!("advance:5".parse::<Transform>().unwrap(), Transform::Advance(220));
        assert_eq!("advance:0.5".parse::<Transform>().unwrap(), Transform::Advance(22));
        assert!("warp:1".parse::<Transform>().is_err());
    }
}
