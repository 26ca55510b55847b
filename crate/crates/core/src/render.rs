//! Scene rendering: RIR convolution, SNR setting and mixing into
//! multi-microphone speech-in-noise (SPIN) signals.

use serde::{Deserialize, Serialize};

use crate::corpus::UtteranceStore;
use crate::dsp::{self, fft_convolve};
use crate::error::{Error, Result};
use crate::interferers::{InterfererKind, SignalStore};
use crate::scene::{
    compute_binaural_rir, ChannelLabel, Ear, HeadGeometry, RoomSpec, ScenePose, Vec3,
    DEFAULT_MAX_ORDER,
};

/// Peak level the mix is scaled to when it would otherwise clip.
pub const HEADROOM_DBFS: f64 = -3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfererSpec {
    pub source_type: InterfererKind,
    pub signal_id: String,
    pub position: Vec3,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub scene_id: String,
    pub room: RoomSpec,
    pub pose: ScenePose,
    pub head: HeadGeometry,
    pub target_utterance_id: String,
    pub interferers: Vec<InterfererSpec>,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.room.absorption()?;
        self.head.validate()?;
        self.pose.check(&self.room, 1.0)?;
        if self.interferers.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "scene {} has no interferers",
                self.scene_id
            )));
        }
        for i in &self.interferers {
            if !self.room.contains(i.position) {
                return Err(Error::InvalidGeometry(format!(
                    "interferer {} outside the room",
                    i.signal_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub sample_rate: u32,
    pub max_order: u32,
    pub pre_roll_s: f64,
    pub post_roll_s: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            sample_rate: dsp::SAMPLE_RATE,
            max_order: DEFAULT_MAX_ORDER,
            pre_roll_s: 0.5,
            post_roll_s: 0.5,
        }
    }
}

/// Rendered hearing-aid inputs for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinSignalSet {
    pub scene_id: String,
    pub mic_signals: Vec<(ChannelLabel, Vec<f64>)>,
    /// Dry target on the scene timeline (zero-padded for the pre/post roll).
    pub anechoic_target: Vec<f64>,
    pub transcript: String,
    pub sample_rate: u32,
}

impl SpinSignalSet {
    pub fn channel(&self, label: ChannelLabel) -> Option<&[f64]> {
        self.mic_signals
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, x)| x.as_slice())
    }

    pub fn ear_channels(&self, ear: Ear) -> Vec<&[f64]> {
        self.mic_signals
            .iter()
            .filter(|(l, _)| l.ear == ear)
            .map(|(_, x)| x.as_slice())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.anechoic_target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anechoic_target.is_empty()
    }
}

/// Separately convolved parts of a scene, before gains are applied.
#[derive(Debug, Clone)]
pub struct SceneComponents {
    pub channels: Vec<ChannelLabel>,
    pub dry_target: Vec<f64>,
    pub transcript: String,
    /// `[channel][sample]`
    pub target: Vec<Vec<f64>>,
    /// `[interferer][channel][sample]`
    pub interferers: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedScene {
    pub spin: SpinSignalSet,
    pub gains: Vec<f64>,
    pub normalisation_scale: f64,
}

const FRAME_S: f64 = 0.010;
const ACTIVITY_FLOOR_DB: f64 = -40.0;

/// Indices of 10 ms frames whose energy is within 40 dB of the loudest.
pub fn active_frames(x: &[f64], sample_rate: u32) -> Vec<std::ops::Range<usize>> {
    let frame = ((FRAME_S * sample_rate as f64).round() as usize).max(1);
    let energies: Vec<(std::ops::Range<usize>, f64)> = (0..x.len() / frame)
        .map(|k| {
            let r = k * frame..(k + 1) * frame;
            let e = dsp::energy(&x[r.clone()]);
            (r, e)
        })
        .collect();
    let max = energies.iter().fold(0.0_f64, |m, (_, e)| m.max(*e));
    if max <= 0.0 {
        return Vec::new();
    }
    let floor = max * 10f64.powf(ACTIVITY_FLOOR_DB / 10.0);
    energies
        .into_iter()
        .filter(|(_, e)| *e >= floor)
        .map(|(r, _)| r)
        .collect()
}

/// Gain for `interferer` so that the target-to-interferer power ratio over
/// target-active frames equals `snr_db`.
pub fn set_snr(target: &[f64], interferer: &[f64], snr_db: f64, sample_rate: u32) -> Result<f64> {
    if target.len() != interferer.len() {
        return Err(Error::InvalidArgument(
            "target and interferer lengths differ".into(),
        ));
    }
    let frames = active_frames(target, sample_rate);
    if frames.is_empty() {
        return Err(Error::SilentTarget);
    }
    let (pt, pi) = frames.iter().fold((0.0, 0.0), |(a, b), r| {
        (a + dsp::energy(&target[r.clone()]), b + dsp::energy(&interferer[r.clone()]))
    });
    if pi <= 0.0 {
        return Err(Error::InvalidArgument(
            "interferer is silent over the target-active frames".into(),
        ));
    }
    Ok((pt / (pi * 10f64.powf(snr_db / 10.0))).sqrt())
}

fn reference_signal(channels: &[ChannelLabel], per_channel: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for ear in Ear::BOTH {
        let idx = channels
            .iter()
            .position(|l| *l == ChannelLabel::new(ear, 0))
            .expect("front mic present on both ears");
        out.extend_from_slice(&per_channel[idx]);
    }
    out
}

fn convolve_to(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    let mut y = fft_convolve(x, h);
    y.resize(len, 0.0);
    y
}

pub fn render_components(
    spec: &SceneSpec,
    corpus: &dyn UtteranceStore,
    store: &dyn SignalStore,
    cfg: &RenderConfig,
) -> Result<SceneComponents> {
    spec.validate()?;
    let fs = cfg.sample_rate;
    let utt = corpus.load(&spec.target_utterance_id)?;
    utt.validate()?;
    let speech = dsp::resample(&utt.samples, utt.sample_rate, fs);
    let pre = (cfg.pre_roll_s * fs as f64).round() as usize;
    let post = (cfg.post_roll_s * fs as f64).round() as usize;
    let len = pre + speech.len() + post;
    let mut dry = vec![0.0; len];
    dry[pre..pre + speech.len()].copy_from_slice(&speech);

    let channels = spec.head.channels();
    let rirs = |source: Vec3| -> Result<Vec<Vec<f64>>> {
        channels
            .iter()
            .map(|&ch| {
                compute_binaural_rir(&spec.room, source, &spec.pose, &spec.head, ch, cfg.max_order, fs)
                    .map(|r| r.taps)
            })
            .collect()
    };
    let target = rirs(spec.pose.source_position)?
        .iter()
        .map(|h| convolve_to(&dry, h, len))
        .collect();
    let interferers = spec
        .interferers
        .iter()
        .map(|i| {
            let signal = store.fetch(&i.signal_id, len, fs)?;
            Ok(rirs(i.position)?
                .iter()
                .map(|h| convolve_to(&signal, h, len))
                .collect())
        })
        .collect::<Result<Vec<Vec<Vec<f64>>>>>()?;
    Ok(SceneComponents {
        channels,
        dry_target: dry,
        transcript: utt.transcript,
        target,
        interferers,
    })
}

/// Gains that put each interferer at its scene SNR, measured on the two
/// front microphones. Silent interferers get gain 0.
pub fn interferer_gains(spec: &SceneSpec, parts: &SceneComponents, sample_rate: u32) -> Result<Vec<f64>> {
    let target_ref = reference_signal(&parts.channels, &parts.target);
    spec.interferers
        .iter()
        .zip(&parts.interferers)
        .map(|(i, sig)| {
            let r = reference_signal(&parts.channels, sig);
            if r.iter().all(|&v| v == 0.0) {
                return Ok(0.0);
            }
            set_snr(&target_ref, &r, i.snr_db, sample_rate)
        })
        .collect()
}

/// Mix components with fixed gains. Interferers are summed first, then the
/// target is added, so a mix equals `target + interferer_sum` exactly.
pub fn mix_components(parts: &SceneComponents, gains: &[f64]) -> Vec<Vec<f64>> {
    (0..parts.channels.len())
        .map(|c| {
            let len = parts.target[c].len();
            let mut noise = vec![0.0; len];
            for (sig, &g) in parts.interferers.iter().zip(gains) {
                for (n, v) in noise.iter_mut().zip(&sig[c]) {
                    *n += g * v;
                }
            }
            parts.target[c].iter().zip(&noise).map(|(t, n)| t + n).collect()
        })
        .collect()
}

pub fn render_scene(
    spec: &SceneSpec,
    corpus: &dyn UtteranceStore,
    store: &dyn SignalStore,
    cfg: &RenderConfig,
) -> Result<RenderedScene> {
    let parts = render_components(spec, corpus, store, cfg)?;
    let gains = interferer_gains(spec, &parts, cfg.sample_rate)?;
    let mut mix = mix_components(&parts, &gains);
    let peak = mix.iter().map(|c| dsp::peak(c)).fold(0.0, f64::max);
    let scale = if peak > 1.0 {
        dsp::db_to_amplitude(HEADROOM_DBFS) / peak
    } else {
        1.0
    };
    if scale != 1.0 {
        for c in &mut mix {
            c.iter_mut().for_each(|v| *v *= scale);
        }
    }
    if mix.iter().flatten().any(|v| !v.is_finite() || v.abs() > 1.0) {
        return Err(Error::RenderOverflow(spec.scene_id.clone()));
    }
    Ok(RenderedScene {
        spin: SpinSignalSet {
            scene_id: spec.scene_id.clone(),
            mic_signals: parts.channels.iter().copied().zip(mix).collect(),
            anechoic_target: parts.dry_target,
            transcript: parts.transcript,
            sample_rate: cfg.sample_rate,
        },
        gains,
        normalisation_scale: scale,
    })
}
