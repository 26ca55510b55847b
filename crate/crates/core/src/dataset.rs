//! Dataset construction: scene sampling, split assignment, rendering to
//! WAV files and the JSON scene manifest.

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceStore;
use crate::dsp::mix_seed;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::interferers::{InterfererKind, SignalStore, SynthInterfererStore};
use crate::render::{render_scene, InterfererSpec, RenderConfig, SceneSpec, SpinSignalSet};
use crate::scene::{ChannelLabel, GeometrySampler, HeadGeometry, RoomSpec, ScenePose, Vec3};
use crate::wav;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGenConfig {
    pub scene_count: usize,
    /// Train, dev, test.
    pub split_ratios: [f64; 3],
    pub room_x: [f64; 2],
    pub room_y: [f64; 2],
    pub room_z: [f64; 2],
    pub rt60_range: [f64; 2],
    pub snr_range: [f64; 2],
    pub interferer_count: [usize; 2],
    pub mics_per_ear: Vec<usize>,
    pub geometry: GeometrySampler,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            scene_count: 20,
            split_ratios: [0.5, 0.1, 0.4],
            room_x: [4.0, 7.0],
            room_y: [3.5, 6.0],
            room_z: [2.4, 3.0],
            rt60_range: [0.2, 0.5],
            snr_range: [0.0, 12.0],
            interferer_count: [1, 3],
            mics_per_ear: vec![2, 3],
            geometry: GeometrySampler::default(),
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let sum: f64 = self.split_ratios.iter().sum();
        if self.split_ratios.iter().any(|r| *r < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return bad(format!("split ratios {:?} must be non-negative and sum to 1", self.split_ratios));
        }
        let [lo, hi] = self.rt60_range;
        if !(0.05..=2.0).contains(&lo) || !(0.05..=2.0).contains(&hi) || lo > hi {
            return bad(format!("rt60 range [{lo}, {hi}] s must lie within [0.05, 2.0] s"));
        }
        for (name, r) in [("room_x", self.room_x), ("room_y", self.room_y), ("room_z", self.room_z)] {
            if !(r[0] > 0.0 && r[0] <= r[1]) {
                return bad(format!("{name} range {r:?} is invalid"));
            }
        }
        if self.snr_range[0] > self.snr_range[1] {
            return bad("snr range is reversed".into());
        }
        let [a, b] = self.interferer_count;
        if a == 0 || a > b {
            return bad(format!("interferer count range [{a}, {b}] needs 1 <= min <= max"));
        }
        if self.mics_per_ear.is_empty() || self.mics_per_ear.iter().any(|m| !(2..=3).contains(m)) {
            return bad("mics_per_ear choices must be 2 or 3".into());
        }
        if self.scene_count == 0 {
            return bad("scene_count must be positive".into());
        }
        Ok(())
    }

    /// Scene counts per split by largest remainder.
    pub fn split_counts(&self) -> [usize; 3] {
        let n = self.scene_count as f64;
        let raw: Vec<f64> = self.split_ratios.iter().map(|r| r * n).collect();
        let mut counts: [usize; 3] = std::array::from_fn(|i| raw[i].floor() as usize);
        let mut left = self.scene_count - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..3).collect();
        order.sort_by(|&a, &b| {
            let fa = raw[a] - raw[a].floor();
            let fb = raw[b] - raw[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedScene {
    pub split: Split,
    pub spec: SceneSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub master_seed: u64,
    pub scenes: Vec<PlannedScene>,
}

pub fn scene_id(index: usize) -> String {
    format!("S{:05}", index + 1)
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Sample one scene. Depends only on `(master_seed, scene_id)` and the
/// assigned utterance.
pub fn plan_scene(
    cfg: &SceneGenConfig,
    master_seed: u64,
    scene_id: &str,
    utterance_id: &str,
) -> Result<SceneSpec> {
    let seed = mix_seed(master_seed, &["scene", scene_id]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut room = None;
    for _ in 0..100 {
        let r = RoomSpec::new(
            uniform(&mut rng, cfg.room_x),
            uniform(&mut rng, cfg.room_y),
            uniform(&mut rng, cfg.room_z),
            uniform(&mut rng, cfg.rt60_range),
        );
        if r.absorption().is_ok() {
            room = Some(r);
            break;
        }
    }
    let room = room.ok_or_else(|| Error::Config("no room in range supports the RT60 range".into()))?;
    let pose: ScenePose = cfg.geometry.sample(&room, &mut rng)?;
    let mics = cfg.mics_per_ear[rng.random_range(0..cfg.mics_per_ear.len())];
    let mut head = HeadGeometry::with_mics(mics)?;
    head.ear_height = cfg.geometry.ear_height;
    let count = rng.random_range(cfg.interferer_count[0]..=cfg.interferer_count[1]);
    let interferers = (0..count)
        .map(|_| {
            let kind = InterfererKind::ALL[rng.random_range(0..InterfererKind::ALL.len())];
            let n = rng.random_range(0..10_000);
            let position = cfg.geometry.sample_interferer(&room, &pose, &mut rng)?;
            Ok(InterfererSpec {
                source_type: kind,
                signal_id: SynthInterfererStore::id_for(kind, n),
                position,
                snr_db: uniform(&mut rng, cfg.snr_range),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneSpec {
        scene_id: scene_id.to_string(),
        room,
        pose,
        head,
        target_utterance_id: utterance_id.to_string(),
        interferers,
        seed,
    })
}

/// Sample every scene and assign splits. Each scene gets its own utterance,
/// so utterances never repeat across splits.
pub fn generate_scenes(
    cfg: &SceneGenConfig,
    master_seed: u64,
    corpus: &dyn UtteranceStore,
) -> Result<SceneManifest> {
    cfg.validate()?;
    let mut ids = corpus.ids();
    if ids.len() < cfg.scene_count {
        return Err(Error::InsufficientCorpus {
            available: ids.len(),
            requested: cfg.scene_count,
        });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(master_seed, &["utterances"])));
    let counts = cfg.split_counts();
    let splits = [Split::Train, Split::Dev, Split::Test];
    let assignment: Vec<Split> = splits
        .iter()
        .zip(counts)
        .flat_map(|(&s, n)| std::iter::repeat_n(s, n))
        .collect();
    let scenes = assignment
        .into_iter()
        .enumerate()
        .map(|(i, split)| {
            Ok(PlannedScene {
                split,
                spec: plan_scene(cfg, master_seed, &scene_id(i), &ids[i])?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneManifest {
        master_seed,
        scenes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfererRecord {
    pub source_type: InterfererKind,
    pub signal_id: String,
    pub position: Vec3,
    pub snr_db: f64,
    pub gain: f64,
}

/// One scene in the dataset manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub scene_id: String,
    pub split: Split,
    pub room: RoomSpec,
    pub absorption: f64,
    pub pose: ScenePose,
    pub head: HeadGeometry,
    pub target_utterance_id: String,
    pub transcript: String,
    pub interferers: Vec<InterfererRecord>,
    pub seed: u64,
    pub normalisation_scale: f64,
    pub num_samples: usize,
    /// Channel label -> WAV path relative to the dataset root.
    pub channel_files: Vec<(String, PathBuf)>,
    pub reference_file: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub master_seed: u64,
    pub sample_rate: u32,
    pub render: RenderConfig,
    pub scenes: Vec<SceneRecord>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SceneRecord> {
        self.scenes.iter().filter(move |s| s.split == split)
    }

    pub fn scene(&self, id: &str) -> Result<&SceneRecord> {
        self.scenes
            .iter()
            .find(|s| s.scene_id == id)
            .ok_or_else(|| Error::NotFound {
                kind: "scene",
                id: id.to_string(),
            })
    }
}

pub fn channel_file_name(scene_id: &str, label: ChannelLabel) -> String {
    format!("{scene_id}_{label}.wav")
}

pub fn reference_file_name(scene_id: &str) -> String {
    format!("{scene_id}_ref.wav")
}

/// Render every planned scene into `root/audio/` and return the manifest.
pub fn render_dataset(
    plan: &SceneManifest,
    corpus: &dyn UtteranceStore,
    store: &dyn SignalStore,
    cfg: &RenderConfig,
    root: &Path,
    exec: Execution,
) -> Result<DatasetManifest> {
    let scenes = exec.try_map(&plan.scenes, |planned| {
        let spec = &planned.spec;
        let rendered = render_scene(spec, corpus, store, cfg)?;
        let audio = Path::new("audio");
        let mut channel_files = Vec::new();
        for (label, x) in &rendered.spin.mic_signals {
            let rel = audio.join(channel_file_name(&spec.scene_id, *label));
            wav::write_mono(root.join(&rel), cfg.sample_rate, x)?;
            channel_files.push((label.to_string(), rel));
        }
        let reference_file = audio.join(reference_file_name(&spec.scene_id));
        wav::write_mono(root.join(&reference_file), cfg.sample_rate, &rendered.spin.anechoic_target)?;
        Ok(SceneRecord {
            scene_id: spec.scene_id.clone(),
            split: planned.split,
            room: spec.room,
            absorption: spec.room.absorption()?,
            pose: spec.pose,
            head: spec.head.clone(),
            target_utterance_id: spec.target_utterance_id.clone(),
            transcript: rendered.spin.transcript.clone(),
            interferers: spec
                .interferers
                .iter()
                .zip(&rendered.gains)
                .map(|(i, &gain)| InterfererRecord {
                    source_type: i.source_type,
                    signal_id: i.signal_id.clone(),
                    position: i.position,
                    snr_db: i.snr_db,
                    gain,
                })
                .collect(),
            seed: spec.seed,
            normalisation_scale: rendered.normalisation_scale,
            num_samples: rendered.spin.len(),
            channel_files,
            reference_file,
        })
    })?;
    Ok(DatasetManifest {
        master_seed: plan.master_seed,
        sample_rate: cfg.sample_rate,
        render: *cfg,
        scenes,
    })
}

/// Plan and render in one go.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    cfg: &SceneGenConfig,
    master_seed: u64,
    corpus: &dyn UtteranceStore,
    store: &dyn SignalStore,
    render: &RenderConfig,
    root: &Path,
    exec: Execution,
) -> Result<(SceneManifest, DatasetManifest)> {
    let plan = generate_scenes(cfg, master_seed, corpus)?;
    let data = render_dataset(&plan, corpus, store, render, root, exec)?;
    Ok((plan, data))
}

/// Load a rendered scene back from disk.
pub fn load_spin(record: &SceneRecord, root: &Path) -> Result<SpinSignalSet> {
    let mut mic_signals = Vec::new();
    let mut rate = None;
    for (label, rel) in &record.channel_files {
        let audio = wav::read_wav(root.join(rel))?;
        rate = Some(audio.sample_rate);
        mic_signals.push((label.parse::<ChannelLabel>()?, audio.mono()));
    }
    let reference = wav::read_wav(root.join(&record.reference_file))?;
    Ok(SpinSignalSet {
        scene_id: record.scene_id.clone(),
        mic_signals,
        anechoic_target: reference.mono(),
        transcript: record.transcript.clone(),
        sample_rate: rate.unwrap_or(reference.sample_rate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SyntheticCorpus;

    #[test]
    fn split_counts_follow_ratios() {
        let cfg = SceneGenConfig {
            scene_count: 100,
            split_ratios: [0.8, 0.1, 0.1],
            ..Default::default()
        };
        assert_eq!(cfg.split_counts(), [80, 10, 10]);
        let cfg = SceneGenConfig {
            scene_count: 7,
            split_ratios: [0.5, 0.25, 0.25],
            ..Default::default()
        };
        assert_eq!(cfg.split_counts().iter().sum::<usize>(), 7);
    }

    #[test]
    fn plans_are_pure_functions_of_seed_and_id() {
        let corpus = SyntheticCorpus::new(30, 1);
        let cfg = SceneGenConfig::default();
        let a = generate_scenes(&cfg, 11, &corpus).unwrap();
        let b = generate_scenes(&cfg, 11, &corpus).unwrap();
        assert_eq!(a, b);
        let s = &a.scenes[3].spec;
        let again = plan_scene(&cfg, 11, &s.scene_id, &s.target_utterance_id).unwrap();
        assert_eq!(&again, s);
        for p in &a.scenes {
            p.spec.validate().unwrap();
        }
    }

    #[test]
    fn small_corpus_is_rejected() {
        let corpus = SyntheticCorpus::new(5, 1);
        let cfg = SceneGenConfig::default();
        assert!(matches!(
            generate_scenes(&cfg, 1, &corpus),
            Err(Error::InsufficientCorpus { available: 5, requested: 20 })
        ));
    }

    #[test]
    fn out_of_range_rt60_fails_validation() {
        let cfg = SceneGenConfig {
            rt60_range: [0.2, 2.5],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
