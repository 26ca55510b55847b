//! Target-speech corpus: sentences with word transcripts and audio.
//!
//! The built-in corpus generates unique sentences from small word lists and
//! renders them with a formant synthesiser, which gives speech-like
//! syllabic envelopes and harmonic spectra without shipping recordings.
//! A directory of recorded sentences can be used instead.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{self, mix_seed, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::wav;

/// Dry speech level at 1 m, dB SPL.
pub const SPEECH_LEVEL_DB_SPL: f64 = 65.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub utterance_id: String,
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub transcript: String,
}

impl Utterance {
    pub fn words(&self) -> Vec<&str> {
        transcript_words(&self.transcript)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::MalformedInput(format!(
                "utterance {} has no samples",
                self.utterance_id
            )));
        }
        if self.words().is_empty() {
            return Err(Error::InvalidTranscript(format!(
                "utterance {} has an empty transcript",
                self.utterance_id
            )));
        }
        Ok(())
    }
}

/// Split a transcript into scoring words.
pub fn transcript_words(transcript: &str) -> Vec<&str> {
    transcript
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\''))
        .filter(|w| !w.is_empty())
        .collect()
}

/// Read access to target sentences.
pub trait UtteranceStore: Sync {
    /// All utterance ids, in a stable order.
    fn ids(&self) -> Vec<String>;
    fn transcript(&self, id: &str) -> Result<String>;
    fn load(&self, id: &str) -> Result<Utterance>;
}

const ADJECTIVES: &[&str] = &[
    "small", "green", "quiet", "heavy", "bright", "old", "warm", "round", "soft", "cold",
    "long", "thin", "red", "early", "sharp", "wooden", "clean", "brown", "calm", "loud",
];
const NOUNS: &[&str] = &[
    "boat", "garden", "kettle", "window", "letter", "horse", "table", "river", "candle", "basket",
    "jacket", "lamp", "bridge", "pencil", "carpet", "orange", "ladder", "clock", "bottle", "train",
    "chair", "rabbit", "blanket", "market",
];
const VERBS: &[&str] = &[
    "crossed", "carried", "found", "painted", "dropped", "pulled", "washed", "opened", "lifted",
    "covered", "watched", "mended", "filled", "passed", "bought", "moved",
];
const PLACES: &[&str] = &[
    "near the door", "by the fire", "on the shelf", "in the hall", "under the stairs",
    "at the station", "over the hill", "behind the shed", "down the lane", "across the yard",
];
const SUBJECTS: &[&str] = &[
    "the farmer", "my sister", "the baker", "a young girl", "the old man", "our neighbour",
    "the teacher", "his brother", "the driver", "a tall boy",
];

/// Unique sentences drawn from the word lists, deterministic in `seed`.
pub fn generate_sentences(count: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &["sentences"]));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let pick = |rng: &mut ChaCha8Rng, list: &[&'static str]| *list.choose(rng).unwrap();
        let s = match rng.random_range(0..3) {
            0 => format!(
                "{} {} the {} {}",
                pick(&mut rng, SUBJECTS),
                pick(&mut rng, VERBS),
                pick(&mut rng, ADJECTIVES),
                pick(&mut rng, NOUNS)
            ),
            1 => format!(
                "the {} {} was {} {}",
                pick(&mut rng, ADJECTIVES),
                pick(&mut rng, NOUNS),
                pick(&mut rng, VERBS),
                pick(&mut rng, PLACES)
            ),
            _ => format!(
                "{} {} a {} {} {}",
                pick(&mut rng, SUBJECTS),
                pick(&mut rng, VERBS),
                pick(&mut rng, ADJECTIVES),
                pick(&mut rng, NOUNS),
                pick(&mut rng, PLACES)
            ),
        };
        if seen.insert(s.clone()) {
            out.push(s);
        }
    }
    out
}

/// Vowel formants (F1, F2, F3) in Hz.
fn formants(vowel: char) -> [f64; 3] {
    match vowel {
        'a' => [730.0, 1090.0, 2440.0],
        'e' => [530.0, 1840.0, 2480.0],
        'i' | 'y' => [300.0, 2250.0, 3000.0],
        'o' => [570.0, 840.0, 2410.0],
        _ => [320.0, 900.0, 2240.0],
    }
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y')
}

/// Syllable nuclei of a word: one vowel per vowel group, at most three.
fn nuclei(word: &str) -> Vec<char> {
    let mut out = Vec::new();
    let mut prev = false;
    for c in word.chars() {
        let v = is_vowel(c);
        if v && !prev {
            out.push(c);
        }
        prev = v;
    }
    if out.is_empty() {
        out.push('a');
    }
    out.truncate(3);
    out
}

fn spectral_envelope(f: f64, formant: [f64; 3]) -> f64 {
    let bw = [90.0, 120.0, 180.0];
    let gain = [1.0, 0.6, 0.3];
    let mut w = 0.02;
    for i in 0..3 {
        let x = (f - formant[i]) / bw[i];
        w += gain[i] / (1.0 + x * x);
    }
    w
}

/// Render a sentence with the formant synthesiser.
pub fn synthesise_sentence(transcript: &str, seed: u64, sample_rate: u32) -> Vec<f64> {
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0_base = rng.random_range(95.0..210.0);
    let words = transcript_words(transcript);
    let mut out = vec![0.0; (0.12 * fs) as usize];
    let total_words = words.len().max(1) as f64;
    for (wi, word) in words.iter().enumerate() {
        let lower = word.to_ascii_lowercase();
        let first = lower.chars().next().unwrap_or('a');
        // Consonant onset.
        match first {
            's' | 'f' | 'h' | 'c' | 'z' => {
                let n = (rng.random_range(0.05..0.09) * fs) as usize;
                let mut hp = dsp::Biquad::highpass(3500.0, 0.7, fs);
                for i in 0..n {
                    let env = (PI * i as f64 / n as f64).sin();
                    let v: f64 = rng.random_range(-1.0..1.0);
                    out.push(0.25 * env * hp.tick(v));
                }
            }
            'p' | 't' | 'k' | 'b' | 'd' | 'g' => {
                let n = (0.02 * fs) as usize;
                let mut hp = dsp::Biquad::highpass(1500.0, 0.7, fs);
                for i in 0..n {
                    let env = (-(i as f64) / (0.004 * fs)).exp();
                    let v: f64 = rng.random_range(-1.0..1.0);
                    out.push(0.5 * env * hp.tick(v));
                }
            }
            _ => {}
        }
        let mut phase = 0.0;
        for nucleus in nuclei(&lower) {
            let dur = rng.random_range(0.14..0.24);
            let n = (dur * fs) as usize;
            let fm = formants(nucleus);
            let stress = rng.random_range(0.6..1.0);
            // Declination across the sentence plus a rise-fall per syllable.
            let f0_start = f0_base * (1.1 - 0.2 * wi as f64 / total_words);
            let harmonics = (5000.0 / f0_start) as usize;
            let amps: Vec<f64> = (1..=harmonics)
                .map(|k| spectral_envelope(k as f64 * f0_start, fm) / (k as f64).sqrt())
                .collect();
            for i in 0..n {
                let t = i as f64 / n as f64;
                let f0 = f0_start * (1.0 + 0.06 * (PI * t).sin());
                phase += 2.0 * PI * f0 / fs;
                let attack = (t / 0.15).min(1.0);
                let release = ((1.0 - t) / 0.3).min(1.0);
                let env = stress * (attack * release).powf(1.5);
                let mut v = 0.0;
                for (k, a) in amps.iter().enumerate() {
                    v += a * ((k + 1) as f64 * phase).sin();
                }
                out.push(env * v);
            }
        }
        let gap = (rng.random_range(0.05..0.1) * fs) as usize;
        out.extend(std::iter::repeat_n(0.0, gap));
    }
    out.extend(std::iter::repeat_n(0.0, (0.12 * fs) as usize));
    let r = dsp::rms(&out);
    let target = dsp::spl_to_rms(SPEECH_LEVEL_DB_SPL);
    if r > 0.0 {
        out.iter_mut().for_each(|v| *v *= target / r);
    }
    out
}

/// Procedurally generated corpus, rendered on demand.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    seed: u64,
    sample_rate: u32,
    sentences: BTreeMap<String, String>,
}

impl SyntheticCorpus {
    pub fn new(count: usize, seed: u64) -> Self {
        let sentences = generate_sentences(count, seed)
            .into_iter()
            .enumerate()
            .map(|(i, s)| (format!("U{:05}", i + 1), s))
            .collect();
        Self {
            seed,
            sample_rate: SAMPLE_RATE,
            sentences,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

impl UtteranceStore for SyntheticCorpus {
    fn ids(&self) -> Vec<String> {
        self.sentences.keys().cloned().collect()
    }

    fn transcript(&self, id: &str) -> Result<String> {
        self.sentences.get(id).cloned().ok_or_else(|| Error::NotFound {
            kind: "utterance",
            id: id.to_string(),
        })
    }

    fn load(&self, id: &str) -> Result<Utterance> {
        let transcript = self.transcript(id)?;
        let samples = synthesise_sentence(&transcript, mix_seed(self.seed, &["voice", id]), self.sample_rate);
        Ok(Utterance {
            utterance_id: id.to_string(),
            samples,
            sample_rate: self.sample_rate,
            transcript,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusEntry {
    utterance_id: String,
    transcript: String,
    wav: PathBuf,
}

/// Recorded sentences listed in `<dir>/corpus.json` as
/// `[{utterance_id, transcript, wav}]` with paths relative to `dir`.
#[derive(Debug, Clone)]
pub struct DirectoryCorpus {
    root: PathBuf,
    entries: BTreeMap<String, CorpusEntry>,
}

impl DirectoryCorpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let root = dir.as_ref().to_path_buf();
        let index = root.join("corpus.json");
        let text = std::fs::read_to_string(&index).map_err(|e| Error::io(&index, e))?;
        let list: Vec<CorpusEntry> =
            serde_json::from_str(&text).map_err(|e| Error::format(&index, e))?;
        Ok(Self {
            root,
            entries: list.into_iter().map(|e| (e.utterance_id.clone(), e)).collect(),
        })
    }
}

impl UtteranceStore for DirectoryCorpus {
    fn ids(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    fn transcript(&self, id: &str) -> Result<String> {
        self.entries
            .get(id)
            .map(|e| e.transcript.clone())
            .ok_or_else(|| Error::NotFound {
                kind: "utterance",
                id: id.to_string(),
            })
    }

    fn load(&self, id: &str) -> Result<Utterance> {
        let entry = self.entries.get(id).ok_or_else(|| Error::NotFound {
            kind: "utterance",
            id: id.to_string(),
        })?;
        let audio = wav::read_wav(self.root.join(&entry.wav))?;
        Ok(Utterance {
            utterance_id: id.to_string(),
            samples: audio.mono(),
            sample_rate: audio.sample_rate,
            transcript: entry.transcript.clone(),
        })
    }
}
