//! Listener audiograms and the artificial-listener generator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{mix_seed, AUDIOGRAM_FREQS};
use crate::error::{Error, Result};
use crate::scene::Ear;

pub const MAX_THRESHOLD_DB: f64 = 120.0;

/// Hearing thresholds (dB HL) at the six audiometric frequencies.
/// Serialised as `{"250": dB, "500": dB, ...}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct Thresholds(pub [f64; 6]);

impl Thresholds {
    pub fn flat(db: f64) -> Self {
        Thresholds([db; 6])
    }

    pub fn at(&self, freq_hz: f64) -> Option<f64> {
        AUDIOGRAM_FREQS
            .iter()
            .position(|&f| f == freq_hz)
            .map(|i| self.0[i])
    }
}

impl TryFrom<BTreeMap<String, f64>> for Thresholds {
    type Error = String;

    fn try_from(map: BTreeMap<String, f64>) -> std::result::Result<Self, String> {
        let mut out = [f64::NAN; 6];
        for (k, v) in map {
            let f: f64 = k
                .trim()
                .parse()
                .map_err(|_| format!("bad frequency key `{k}`"))?;
            let i = AUDIOGRAM_FREQS
                .iter()
                .position(|&g| g == f)
                .ok_or_else(|| format!("{k} Hz is not an audiometric frequency"))?;
            out[i] = v;
        }
        if let Some(i) = out.iter().position(|v| v.is_nan()) {
            return Err(format!("missing threshold at {} Hz", AUDIOGRAM_FREQS[i]));
        }
        Ok(Thresholds(out))
    }
}

impl From<Thresholds> for BTreeMap<String, f64> {
    fn from(t: Thresholds) -> Self {
        AUDIOGRAM_FREQS
            .iter()
            .zip(t.0)
            .map(|(f, v)| (format!("{f}"), v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audiogram {
    pub listener_id: String,
    pub left: Thresholds,
    pub right: Thresholds,
}

impl Audiogram {
    pub fn new(listener_id: impl Into<String>, left: [f64; 6], right: [f64; 6]) -> Self {
        Self {
            listener_id: listener_id.into(),
            left: Thresholds(left),
            right: Thresholds(right),
        }
    }

    pub fn flat(listener_id: impl Into<String>, db: f64) -> Self {
        Self::new(listener_id, [db; 6], [db; 6])
    }

    pub fn ear(&self, ear: Ear) -> &[f64; 6] {
        match ear {
            Ear::Left => &self.left.0,
            Ear::Right => &self.right.0,
        }
    }

    pub fn ear_mut(&mut self, ear: Ear) -> &mut [f64; 6] {
        match ear {
            Ear::Left => &mut self.left.0,
            Ear::Right => &mut self.right.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for ear in Ear::BOTH {
            for (f, &v) in AUDIOGRAM_FREQS.iter().zip(self.ear(ear)) {
                if !(0.0..=MAX_THRESHOLD_DB).contains(&v) {
                    return Err(Error::Range {
                        key: format!("threshold {}:{ear}:{f}", self.listener_id),
                        value: v,
                        min: 0.0,
                        max: MAX_THRESHOLD_DB,
                    });
                }
            }
        }
        Ok(())
    }

    /// Four-frequency average (0.5, 1, 2, 4 kHz).
    pub fn pta4(&self, ear: Ear) -> f64 {
        self.ear(ear)[1..5].iter().sum::<f64>() / 4.0
    }

    pub fn better_ear(&self) -> Ear {
        if self.pta4(Ear::Right) < self.pta4(Ear::Left) {
            Ear::Right
        } else {
            Ear::Left
        }
    }

    /// Grade by better-ear four-frequency average.
    pub fn category(&self) -> LossCategory {
        let pta = self.pta4(Ear::Left).min(self.pta4(Ear::Right));
        if pta < 20.0 {
            LossCategory::Normal
        } else if pta < 35.0 {
            LossCategory::Mild
        } else if pta < 50.0 {
            LossCategory::Moderate
        } else {
            LossCategory::Severe
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let a: Audiogram = serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        a.validate()?;
        Ok(a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossCategory {
    Normal,
    Mild,
    Moderate,
    Severe,
}

pub fn load_population(path: impl AsRef<Path>) -> Result<Vec<Audiogram>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let list: Vec<Audiogram> =
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    for a in &list {
        a.validate()?;
    }
    let mut ids: Vec<&str> = list.iter().map(|a| a.listener_id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Schema(format!("duplicate listener id {}", w[0])));
    }
    Ok(list)
}

pub fn save_population(path: impl AsRef<Path>, listeners: &[Audiogram]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(listeners).expect("audiograms serialise");
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Normal,
    Flat,
    Sloping,
    SteepSloping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Mild,
    Moderate,
    Severe,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Normal, Shape::Flat, Shape::Sloping, Shape::SteepSloping];

    fn name(self) -> &'static str {
        match self {
            Shape::Normal => "normal",
            Shape::Flat => "flat",
            Shape::Sloping => "sloping",
            Shape::SteepSloping => "steep_sloping",
        }
    }
}

impl Severity {
    pub const ALL: [Severity; 3] = [Severity::Mild, Severity::Moderate, Severity::Severe];

    fn name(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown audiogram shape `{s}`")))
    }
}

impl FromStr for Severity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown severity `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ListenerProfile {
    pub shape: Shape,
    pub severity: Severity,
    pub asymmetry_db: f64,
}

impl ListenerProfile {
    pub fn new(shape: Shape, severity: Severity) -> Self {
        Self {
            shape,
            severity,
            asymmetry_db: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=30.0).contains(&self.asymmetry_db) {
            return Err(Error::Range {
                key: "asymmetry_db".into(),
                value: self.asymmetry_db,
                min: 0.0,
                max: 30.0,
            });
        }
        Ok(())
    }

    /// Template thresholds before jitter and asymmetry.
    pub fn template(&self) -> [f64; 6] {
        let (low, slope) = match (self.shape, self.severity) {
            (Shape::Normal, _) => (5.0, 0.0),
            (Shape::Flat, s) => (pick(s, [30.0, 50.0, 70.0]), 0.0),
            (Shape::Sloping, s) => (pick(s, [20.0, 35.0, 55.0]), 10.0),
            (Shape::SteepSloping, s) => (pick(s, [15.0, 25.0, 45.0]), 20.0),
        };
        AUDIOGRAM_FREQS.map(|f| low + slope * (f / 1000.0).log2().max(0.0))
    }
}

fn pick(s: Severity, v: [f64; 3]) -> f64 {
    match s {
        Severity::Mild => v[0],
        Severity::Moderate => v[1],
        Severity::Severe => v[2],
    }
}

const JITTER_DB: f64 = 5.0;

/// Template plus uniform ±5 dB jitter per frequency and ear, clamped to
/// [0, 120]; the asymmetry offset is added to a randomly chosen ear.
pub fn generate_listener(
    listener_id: &str,
    profile: &ListenerProfile,
    rng_seed: u64,
) -> Result<Audiogram> {
    profile.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let template = profile.template();
    let mut ears = [[0.0; 6]; 2];
    for ear in &mut ears {
        for (v, t) in ear.iter_mut().zip(template) {
            *v = t + rng.random_range(-JITTER_DB..=JITTER_DB);
        }
    }
    let worse = if rng.random_bool(0.5) { 0 } else { 1 };
    for v in &mut ears[worse] {
        *v += profile.asymmetry_db;
    }
    let clamp = |e: [f64; 6]| e.map(|v| v.clamp(0.0, MAX_THRESHOLD_DB));
    Ok(Audiogram::new(listener_id, clamp(ears[0]), clamp(ears[1])))
}

pub fn listener_id(index: usize) -> String {
    format!("L{:04}", index + 1)
}

/// A mixed population: shapes and severities drawn uniformly, with an
/// asymmetry on roughly a third of listeners.
pub fn generate_population(count: usize, seed: u64) -> Vec<(ListenerProfile, Audiogram)> {
    (0..count)
        .map(|i| {
            let id = listener_id(i);
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &["profile", &id]));
            let shape = Shape::ALL[rng.random_range(0..Shape::ALL.len())];
            let severity = Severity::ALL[rng.random_range(0..Severity::ALL.len())];
            let asymmetry_db = if rng.random_bool(1.0 / 3.0) {
                rng.random_range(0.0..15.0)
            } else {
                0.0
            };
            let profile = ListenerProfile {
                shape,
                severity,
                asymmetry_db,
            };
            let audiogram = generate_listener(&id, &profile, mix_seed(seed, &["audiogram", &id]))
                .expect("generated profiles are valid");
            (profile, audiogram)
        })
        .collect()
}
