//! Non-speech interferer signals.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{self, mix_seed, Biquad};
use crate::error::{Error, Result};
use crate::wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterfererKind {
    Television,
    Appliance,
    Music,
    Noise,
}

impl InterfererKind {
    pub const ALL: [InterfererKind; 4] = [
        InterfererKind::Television,
        InterfererKind::Appliance,
        InterfererKind::Music,
        InterfererKind::Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InterfererKind::Television => "television",
            InterfererKind::Appliance => "appliance",
            InterfererKind::Music => "music",
            InterfererKind::Noise => "noise",
        }
    }
}

impl fmt::Display for InterfererKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterfererKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown interferer type `{s}`")))
    }
}

/// Read access to interferer recordings.
pub trait SignalStore: Sync {
    /// `len` samples of signal `id` at `sample_rate`, looped or truncated.
    fn fetch(&self, id: &str, len: usize, sample_rate: u32) -> Result<Vec<f64>>;
}

/// Loop or truncate `x` to exactly `len` samples.
pub fn loop_to_length(x: &[f64], len: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; len];
    }
    x.iter().copied().cycle().take(len).collect()
}

/// Synthetic interferers addressed as `<kind>-<n>`, e.g. `music-0003`.
/// Each id names one deterministic signal of unbounded length.
#[derive(Debug, Clone, Copy, Default)]
pub struct SynthInterfererStore {
    pub seed: u64,
}

impl SynthInterfererStore {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn id_for(kind: InterfererKind, n: u32) -> String {
        format!("{}-{n:04}", kind.name())
    }

    fn parse_id(id: &str) -> Result<InterfererKind> {
        let not_found = || Error::NotFound {
            kind: "interferer",
            id: id.to_string(),
        };
        let (kind, n) = id.rsplit_once('-').ok_or_else(not_found)?;
        n.parse::<u32>().map_err(|_| not_found())?;
        kind.parse().map_err(|_| not_found())
    }
}

impl SignalStore for SynthInterfererStore {
    fn fetch(&self, id: &str, len: usize, sample_rate: u32) -> Result<Vec<f64>> {
        let kind = Self::parse_id(id)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, &["interferer", id]));
        let fs = sample_rate as f64;
        let mut x = match kind {
            InterfererKind::Noise => pink_noise(len, &mut rng),
            InterfererKind::Appliance => appliance(len, fs, &mut rng),
            InterfererKind::Music => music(len, fs, &mut rng),
            InterfererKind::Television => television(len, fs, &mut rng),
        };
        let r = dsp::rms(&x);
        let target = dsp::spl_to_rms(60.0);
        if r > 0.0 {
            x.iter_mut().for_each(|v| *v *= target / r);
        }
        Ok(x)
    }
}

fn pink_noise(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Paul Kellet's economy pink filter.
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect()
}

fn appliance(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mains = if rng.random_bool(0.5) { 50.0 } else { 60.0 };
    let whine = rng.random_range(1500.0..4000.0);
    let churn = rng.random_range(0.4..1.5);
    let mut bp = Biquad::lowpass(rng.random_range(600.0..1500.0), 0.8, fs);
    let mut hp = Biquad::butterworth_highpass(150.0, fs);
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            let hum: f64 = (1..=8)
                .map(|k| (2.0 * PI * mains * k as f64 * t).sin() / k as f64)
                .sum();
            let tone = 0.3 * (2.0 * PI * whine * t + 2.0 * (2.0 * PI * 0.7 * t).sin()).sin();
            let w: f64 = StandardNormal.sample(rng);
            let rumble = hp.tick(bp.tick(w)) * (1.0 + 0.5 * (2.0 * PI * churn * t).sin());
            0.4 * hum + tone + 2.0 * rumble
        })
        .collect()
}

fn note(freq: f64, t: f64, dur: f64) -> f64 {
    if t < 0.0 || t >= dur {
        return 0.0;
    }
    let env = (t / 0.01).min(1.0) * (-(t) * 3.0).exp() * ((dur - t) / 0.02).min(1.0);
    (1..=6)
        .map(|k| (2.0 * PI * freq * k as f64 * t).sin() / k as f64)
        .sum::<f64>()
        * env
}

fn music(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let beat = 60.0 / rng.random_range(90.0..130.0);
    let root = 220.0 * 2f64.powf(rng.random_range(0..12) as f64 / 12.0);
    // I - V - vi - IV in semitones above the root.
    let chords: [[i32; 3]; 4] = [[0, 4, 7], [7, 11, 14], [9, 12, 16], [5, 9, 12]];
    let chord_len = 2.0 * beat;
    (0..len)
        .map(|i| {
            let t = i as f64 / fs;
            let idx = (t / chord_len) as usize;
            let local = t - idx as f64 * chord_len;
            let chord = chords[idx % 4];
            let mut v = 0.0;
            for &s in &chord {
                v += note(root * 2f64.powf(s as f64 / 12.0), local, chord_len);
            }
            let bass = root / 2.0 * 2f64.powf(chord[0] as f64 / 12.0);
            v + 1.5 * note(bass, t - (t / beat).floor() * beat, beat)
        })
        .collect()
}

fn television(len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let bed = music(len, fs, rng);
    let bed_rms = dsp::rms(&bed).max(1e-12);
    let mut bp_lo = Biquad::butterworth_highpass(300.0, fs);
    let mut bp_hi = Biquad::lowpass(3000.0, 0.7, fs);
    let mut level = 1.0;
    let mut next_change = 0usize;
    let mut out = Vec::with_capacity(len);
    for (i, b) in bed.iter().enumerate() {
        if i >= next_change {
            level = rng.random_range(0.1..1.0);
            next_change = i + (rng.random_range(0.2..1.0) * fs) as usize;
        }
        let w: f64 = StandardNormal.sample(rng);
        let crowd = bp_hi.tick(bp_lo.tick(w));
        out.push(0.5 * b / bed_rms + level * crowd);
    }
    out
}

/// Recordings listed in `<dir>/interferers.json` as `{id: wav_path}`.
#[derive(Debug, Clone)]
pub struct DirectorySignalStore {
    root: PathBuf,
    files: BTreeMap<String, PathBuf>,
}

impl DirectorySignalStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let index = root.join("interferers.json");
        let text = std::fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
        let files = serde_json::from_str(&text).map_err(|e| Error::format(&index, e))?;
        Ok(Self { root, files })
    }
}

impl SignalStore for DirectorySignalStore {
    fn fetch(&self, id: &str, len: usize, sample_rate: u32) -> Result<Vec<f64>> {
        let path = self.files.get(id).ok_or_else(|| Error::NotFound {
            kind: "interferer",
            id: id.to_string(),
        })?;
        let audio = wav::read_wav(self.root.join(path))?;
        let x = dsp::resample(&audio.mono(), audio.sample_rate, sample_rate);
        Ok(loop_to_length(&x, len))
    }
}
