//! Stage functions shared by the CLI subcommands and `run_all`.
//!
//! Every stage reads the config plus earlier stages' manifests from the
//! workspace directory and writes its own outputs there. Paths stored in
//! manifests are relative to the workspace, so two runs in different
//! directories produce byte-identical files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{read_json, write_json, PipelineConfig};
use super::entry::{ingest_entry, Coverage, Entry, EntryKind, EntryMetadata, IngestedEntry, PredictionRow, ProcessorDecl};
use super::scoring::{self, mean, rank_and_cap, Leaderboard, ScoredEntry};
use crate::causality::{require_causal, BaselineProcessor, CausalityReport, CommandProcessor, Processor, Transform, TransformProcessor};
use crate::dataset::{self, load_spin, DatasetManifest, SceneManifest, SceneRecord, Split};
use crate::dsp::mix_seed;
use crate::enhance::{enhance, EnhancedOutput};
use crate::error::{Error, Result, StageExt};
use crate::exec::Execution;
use crate::hearing_loss::simulate_hearing_loss_with;
use crate::listener::{generate_population, load_population, save_population, Audiogram, ListenerProfile, LossCategory};
use crate::panel::{self, panel_measure, read_panel_csv, write_rows, PanelRow, PanelTable};
use crate::prediction::{ear_metrics, fit_logistic, predict, BinauralRule, LogisticFit, LogisticMap};
use crate::render::SpinSignalSet;
use crate::scene::{ChannelLabel, Ear};
use crate::wav;

/// Layout of a pipeline output directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.json")
    }
    pub fn scenes(&self) -> PathBuf {
        self.path("scenes.json")
    }
    pub fn dataset(&self) -> PathBuf {
        self.path("dataset.json")
    }
    pub fn listeners(&self) -> PathBuf {
        self.path("listeners.json")
    }
    pub fn profiles(&self) -> PathBuf {
        self.path("listener_profiles.json")
    }
    pub fn logistic(&self) -> PathBuf {
        self.path("logistic.json")
    }
    pub fn entry_dir(&self, entry_id: &str) -> PathBuf {
        self.path("entries").join(entry_id)
    }
    pub fn panel_table(&self, entry_id: &str) -> PathBuf {
        self.path("panel").join(format!("{entry_id}.csv"))
    }
    pub fn panel_responses(&self, entry_id: &str) -> PathBuf {
        self.path("panel").join(format!("{entry_id}_responses.csv"))
    }
    pub fn score_breakdown_rel(entry_id: &str) -> PathBuf {
        PathBuf::from("scores").join(format!("{entry_id}.csv"))
    }
    pub fn score_summary(&self, entry_id: &str) -> PathBuf {
        self.path("scores").join(format!("{entry_id}.json"))
    }
    pub fn degraded_dir(&self, entry_id: &str) -> PathBuf {
        self.path("degraded").join(entry_id)
    }
    pub fn leaderboard(&self, kind: EntryKind, ext: &str) -> PathBuf {
        self.path(format!("leaderboard_{kind}.{ext}"))
    }
    pub fn summary(&self) -> PathBuf {
        self.path("summary.json")
    }
}

pub fn gen_scenes(cfg: &PipelineConfig, ws: &Workspace) -> Result<SceneManifest> {
    cfg.validate()?;
    let corpus = cfg.open_corpus()?;
    let plan = dataset::generate_scenes(&cfg.scenes, cfg.seed, corpus.as_ref())?;
    write_json(&ws.scenes(), &plan)?;
    Ok(plan)
}

pub fn render(cfg: &PipelineConfig, ws: &Workspace, exec: Execution) -> Result<DatasetManifest> {
    cfg.validate()?;
    let plan: SceneManifest = read_json(&ws.scenes())?;
    let corpus = cfg.open_corpus()?;
    let store = cfg.open_interferers()?;
    let data = dataset::render_dataset(&plan, corpus.as_ref(), store.as_ref(), &cfg.render, &ws.root, exec)?;
    write_json(&ws.dataset(), &data)?;
    Ok(data)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ProfileRecord {
    listener_id: String,
    profile: ListenerProfile,
    category: LossCategory,
}

pub fn gen_listeners(cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<Audiogram>> {
    cfg.panel.validate()?;
    let population = generate_population(cfg.panel.listener_count, mix_seed(cfg.seed, &["listeners"]));
    let audiograms: Vec<Audiogram> = population.iter().map(|(_, a)| a.clone()).collect();
    let profiles: Vec<ProfileRecord> = population
        .iter()
        .map(|(p, a)| ProfileRecord {
            listener_id: a.listener_id.clone(),
            profile: *p,
            category: a.category(),
        })
        .collect();
    save_population(ws.listeners(), &audiograms)?;
    write_json(&ws.profiles(), &profiles)?;
    Ok(audiograms)
}

pub fn load_dataset(ws: &Workspace) -> Result<DatasetManifest> {
    read_json(&ws.dataset())
}

pub fn load_listeners(ws: &Workspace) -> Result<Vec<Audiogram>> {
    load_population(ws.listeners())
}

pub fn scenes_in(data: &DatasetManifest, split: Split) -> Vec<&SceneRecord> {
    data.split(split).collect()
}

pub fn coverage(data: &DatasetManifest, listeners: &[Audiogram], split: Split) -> Coverage {
    Coverage {
        scene_ids: data.split(split).map(|s| s.scene_id.clone()).collect(),
        listener_ids: listeners.iter().map(|l| l.listener_id.clone()).collect(),
    }
}

/// Which processor produces an enhancement entry's signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnhancerKind {
    Baseline,
    /// Front microphone of each ear, unprocessed.
    Passthrough,
}

pub fn passthrough(spin: &SpinSignalSet, listener_id: &str) -> Result<EnhancedOutput> {
    let front = |ear| {
        spin.channel(ChannelLabel::new(ear, 0))
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::MalformedInput(format!("scene {} lacks an {ear} front mic", spin.scene_id)))
    };
    Ok(EnhancedOutput {
        scene_id: spin.scene_id.clone(),
        listener_id: listener_id.to_string(),
        left: front(Ear::Left)?,
        right: front(Ear::Right)?,
        processing_latency_samples: 0,
    })
}

fn run_enhancer(kind: EnhancerKind, cfg: &PipelineConfig, spin: &SpinSignalSet, listener: &Audiogram) -> Result<EnhancedOutput> {
    match kind {
        EnhancerKind::Baseline => enhance(spin, &cfg.processor, listener),
        EnhancerKind::Passthrough => passthrough(spin, &listener.listener_id),
    }
}

/// Process every scene of `split` for every listener and write an
/// enhancement entry into `entries/<entry_id>/`.
pub fn enhance_entry(
    cfg: &PipelineConfig,
    ws: &Workspace,
    kind: EnhancerKind,
    entry_id: &str,
    team_id: &str,
    split: Split,
    exec: Execution,
) -> Result<PathBuf> {
    let data = load_dataset(ws)?;
    let listeners = load_listeners(ws)?;
    let dir = ws.entry_dir(entry_id);
    let audio = dir.join("audio");
    let scenes = scenes_in(&data, split);
    exec.try_map(&scenes, |record| {
        let spin = load_spin(record, &ws.root)?;
        for listener in &listeners {
            run_enhancer(kind, cfg, &spin, listener)?.write(&audio, spin.sample_rate)?;
        }
        Ok(())
    })?;
    let processor = match kind {
        EnhancerKind::Baseline => ProcessorDecl::Baseline,
        EnhancerKind::Passthrough => ProcessorDecl::Builtin {
            transform: "passthrough".into(),
        },
    };
    let entry = Entry {
        entry_id: entry_id.to_string(),
        team_id: team_id.to_string(),
        kind: EntryKind::Enhancement,
        payload_path: PathBuf::from("audio"),
        metadata: EntryMetadata {
            processor: Some(processor),
            ..Default::default()
        },
    };
    let file = dir.join(Entry::FILE_NAME);
    write_json(&file, &entry)?;
    Ok(file)
}

/// Write HL-model versions of an enhancement entry's signals.
pub fn degrade(cfg: &PipelineConfig, ws: &Workspace, entry: &IngestedEntry, exec: Execution) -> Result<PathBuf> {
    let data = load_dataset(ws)?;
    let listeners = load_listeners(ws)?;
    let cov = coverage(&data, &listeners, Split::Test);
    let out_dir = ws.degraded_dir(&entry.entry.entry_id);
    let payload = entry.payload();
    let pairs: Vec<(&str, &str)> = cov.pairs().collect();
    exec.try_map(&pairs, |&(scene, lid)| {
        let listener = listeners.iter().find(|l| l.listener_id == lid).expect("listener in coverage");
        let (out, fs) = EnhancedOutput::read(&payload, scene, lid)?;
        let hl = |ear| simulate_hearing_loss_with(out.ear(ear), listener, ear, fs, &cfg.prediction.hearing_loss);
        let (l, r) = (hl(Ear::Left)?, hl(Ear::Right)?);
        wav::write_wav(out_dir.join(format!("{scene}_{lid}_hl.wav")), fs, &[&l, &r])
    })?;
    Ok(out_dir)
}

fn test_spins(ws: &Workspace, data: &DatasetManifest, exec: Execution) -> Result<Vec<SpinSignalSet>> {
    let scenes = scenes_in(data, Split::Test);
    exec.try_map(&scenes, |r| load_spin(r, &ws.root))
}

/// Simulated panel on an enhancement entry's test-split signals.
pub fn panel_for_entry(cfg: &PipelineConfig, ws: &Workspace, entry: &IngestedEntry, exec: Execution) -> Result<PanelTable> {
    let data = load_dataset(ws)?;
    let listeners = load_listeners(ws)?;
    let spins = test_spins(ws, &data, exec)?;
    let payload = entry.payload();
    let table = panel_measure(
        &spins,
        &listeners,
        |spin, listener| {
            let file = payload.join(EnhancedOutput::file_name(&spin.scene_id, &listener.listener_id));
            if !file.is_file() {
                return Ok(None);
            }
            let (out, fs) = EnhancedOutput::read(&payload, &spin.scene_id, &listener.listener_id)?;
            if fs != spin.sample_rate {
                return Err(Error::format(&file, format!("sample rate {fs} differs from dataset rate {}", spin.sample_rate)));
            }
            Ok(Some(out))
        },
        &cfg.panel,
        exec,
    )?;
    table.write_csv(&ws.panel_table(&entry.entry.entry_id))?;
    table.write_responses_csv(&ws.panel_responses(&entry.entry.entry_id))?;
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub map: LogisticMap,
    pub fitted: bool,
    pub training_mse: Option<f64>,
    pub constant_mse: Option<f64>,
    pub pairs: usize,
    pub note: String,
}

/// Refit the predictor's logistic map against the panel using the baseline
/// aid on the training split. Falls back to the configured map when the
/// training data cannot support a fit.
pub fn fit_map(cfg: &PipelineConfig, ws: &Workspace, exec: Execution) -> Result<FitRecord> {
    let data = load_dataset(ws)?;
    let listeners = load_listeners(ws)?;
    let scenes = scenes_in(&data, Split::Train);
    let per_scene = exec.try_map(&scenes, |record| {
        let spin = load_spin(record, &ws.root)?;
        listeners
            .iter()
            .map(|listener| {
                let out = enhance(&spin, &cfg.processor, listener)?;
                let [l, r] = ear_metrics(&spin, &out, listener, &cfg.prediction)?;
                let d = match cfg.prediction.binaural {
                    BinauralRule::BetterEar => l.max(r),
                    BinauralRule::Mean => 0.5 * (l + r),
                };
                let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
                    panel::response_seed(&cfg.panel, &spin.scene_id, &listener.listener_id),
                );
                let resp = panel::simulate_response(&spin, &out, listener, &spin.transcript, &mut rng, &cfg.panel)?;
                Ok((d, resp.si()))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let pairs: Vec<(f64, f64)> = per_scene.into_iter().flatten().collect();
    let record = if !cfg.fit_logistic {
        FitRecord {
            map: cfg.prediction.map,
            fitted: false,
            training_mse: None,
            constant_mse: None,
            pairs: pairs.len(),
            note: "fitting disabled in config".into(),
        }
    } else {
        match fit_logistic(&pairs) {
            Ok(LogisticFit { map, mse }) => {
                let m = mean(pairs.iter().map(|p| p.1));
                FitRecord {
                    map,
                    fitted: true,
                    training_mse: Some(mse),
                    constant_mse: Some(mean(pairs.iter().map(|p| (p.1 - m).powi(2)))),
                    pairs: pairs.len(),
                    note: "least-squares fit on the training split".into(),
                }
            }
            Err(e) => FitRecord {
                map: cfg.prediction.map,
                fitted: false,
                training_mse: None,
                constant_mse: None,
                pairs: pairs.len(),
                note: format!("kept the configured map: {e}"),
            },
        }
    };
    write_json(&ws.logistic(), &record)?;
    Ok(record)
}

pub fn current_map(cfg: &PipelineConfig, ws: &Workspace) -> Result<LogisticMap> {
    let path = ws.logistic();
    if path.is_file() {
        Ok(read_json::<FitRecord>(&path)?.map)
    } else {
        Ok(cfg.prediction.map)
    }
}

fn write_prediction_entry(ws: &Workspace, entry_id: &str, team_id: &str, rows: &[PredictionRow]) -> Result<PathBuf> {
    let dir = ws.entry_dir(entry_id);
    write_rows(&dir.join("predictions.csv"), rows)?;
    let entry = Entry {
        entry_id: entry_id.to_string(),
        team_id: team_id.to_string(),
        kind: EntryKind::Prediction,
        payload_path: PathBuf::from("predictions.csv"),
        metadata: EntryMetadata::default(),
    };
    let file = dir.join(Entry::FILE_NAME);
    write_json(&file, &entry)?;
    Ok(file)
}

/// Baseline predictions for an enhancement entry's test-split signals.
pub fn predict_entry(
    cfg: &PipelineConfig,
    ws: &Workspace,
    enhanced: &IngestedEntry,
    entry_id: &str,
    team_id: &str,
    exec: Execution,
) -> Result<PathBuf> {
    let data = load_dataset(ws)?;
    let listeners = load_listeners(ws)?;
    let mut pcfg = cfg.prediction;
    pcfg.map = current_map(cfg, ws)?;
    let payload = enhanced.payload();
    let scenes = scenes_in(&data, Split::Test);
    let rows = exec.try_map(&scenes, |record| {
        let spin = load_spin(record, &ws.root)?;
        listeners
            .iter()
            .map(|listener| {
                let (out, _) = EnhancedOutput::read(&payload, &spin.scene_id, &listener.listener_id)?;
                let s = predict(&spin, &out, listener, &pcfg)?;
                Ok(PredictionRow {
                    scene_id: s.scene_id,
                    listener_id: s.listener_id,
                    score: s.score,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    write_prediction_entry(ws, entry_id, team_id, &rows.concat())
}

/// Predict the same score for every pair.
pub fn constant_entry(ws: &Workspace, entry_id: &str, team_id: &str, cov: &Coverage, value: f64) -> Result<PathBuf> {
    let rows: Vec<PredictionRow> = cov
        .pairs()
        .map(|(s, l)| PredictionRow {
            scene_id: s.to_string(),
            listener_id: l.to_string(),
            score: value,
        })
        .collect();
    write_prediction_entry(ws, entry_id, team_id, &rows)
}

/// Build the processor an entry declares, for the causality gate.
pub fn declared_processor(cfg: &PipelineConfig, ws: &Workspace, decl: &ProcessorDecl) -> Result<Box<dyn Processor>> {
    Ok(match decl {
        ProcessorDecl::Baseline => {
            let listeners = load_listeners(ws)?;
            let data = load_dataset(ws)?;
            let head = data
                .scenes
                .iter()
                .max_by_key(|s| s.head.mics_per_ear)
                .map(|s| s.head.clone())
                .ok_or_else(|| Error::Schema("dataset has no scenes".into()))?;
            let audiogram = listeners
                .iter()
                .max_by(|a, b| a.pta4(Ear::Left).total_cmp(&b.pta4(Ear::Left)))
                .cloned()
                .ok_or_else(|| Error::Schema("no listeners".into()))?;
            Box::new(BaselineProcessor {
                config: cfg.processor.clone(),
                audiogram,
                channels: head.channels(),
            })
        }
        ProcessorDecl::Builtin { transform } => Box::new(TransformProcessor {
            transform: transform.parse::<Transform>()?,
            channels: 2,
        }),
        ProcessorDecl::Command { argv, channels } => {
            let (program, args) = argv
                .split_first()
                .ok_or_else(|| Error::Schema("processor command is empty".into()))?;
            Box::new(CommandProcessor {
                program: program.into(),
                args: args.to_vec(),
                channels: *channels,
            })
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhancementSummary {
    pub entry_id: String,
    pub team_id: String,
    pub mean_si: f64,
    pub signals: usize,
    pub lookahead_ms: f64,
    pub mean_si_by_category: Vec<(LossCategory, f64)>,
}

pub fn mean_si_by_category(rows: &[PanelRow], listeners: &[Audiogram]) -> Vec<(LossCategory, f64)> {
    let cat = |id: &str| listeners.iter().find(|l| l.listener_id == id).map(Audiogram::category);
    let mut cats: Vec<LossCategory> = listeners.iter().map(Audiogram::category).collect();
    cats.sort();
    cats.dedup();
    cats.into_iter()
        .map(|c| {
            let v = mean(rows.iter().filter(|r| cat(&r.listener_id) == Some(c)).map(|r| r.si_measured));
            (c, v)
        })
        .collect()
}

/// Causality gate, then the simulated panel on the test split.
pub fn score_enhancement(cfg: &PipelineConfig, ws: &Workspace, entry_path: &Path, exec: Execution) -> Result<ScoredEntry> {
    let data = load_dataset(ws)?;
    let listeners = load_listeners(ws)?;
    let entry = ingest_entry(entry_path, EntryKind::Enhancement, &coverage(&data, &listeners, Split::Test))?;
    let decl = entry
        .entry
        .metadata
        .processor
        .as_ref()
        .ok_or_else(|| Error::Schema(format!("entry {} does not declare its processor", entry.entry.entry_id)))?;
    let mut processor = declared_processor(cfg, ws, decl)?;
    let report: CausalityReport = require_causal(&entry.entry.entry_id, processor.as_mut(), data.sample_rate)?;
    let table = panel_for_entry(cfg, ws, &entry, exec)?;
    let rows = table.rows();
    let rel = Workspace::score_breakdown_rel(&entry.entry.entry_id);
    write_rows(&ws.path(&rel), &rows)?;
    let summary = EnhancementSummary {
        entry_id: entry.entry.entry_id.clone(),
        team_id: entry.entry.team_id.clone(),
        mean_si: scoring::mean_si(&rows),
        signals: rows.len(),
        lookahead_ms: report.measured_lookahead_ms,
        mean_si_by_category: mean_si_by_category(&rows, &listeners),
    };
    write_json(&ws.score_summary(&entry.entry.entry_id), &summary)?;
    Ok(ScoredEntry {
        entry_id: summary.entry_id,
        team_id: summary.team_id,
        primary_score: summary.mean_si,
        breakdown_path: rel,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSummary {
    pub entry_id: String,
    pub team_id: String,
    pub mse: f64,
    pub pairs: usize,
}

pub fn score_prediction(ws: &Workspace, entry_path: &Path, panel_csv: &Path) -> Result<ScoredEntry> {
    let panel = read_panel_csv(panel_csv)?;
    let mut cov = Coverage {
        scene_ids: Vec::new(),
        listener_ids: Vec::new(),
    };
    for r in &panel {
        if !cov.scene_ids.contains(&r.scene_id) {
            cov.scene_ids.push(r.scene_id.clone());
        }
        if !cov.listener_ids.contains(&r.listener_id) {
            cov.listener_ids.push(r.listener_id.clone());
        }
    }
    let entry = ingest_entry(entry_path, EntryKind::Prediction, &cov)?;
    let score = scoring::score_prediction(&entry, &panel)?;
    let rel = Workspace::score_breakdown_rel(&entry.entry.entry_id);
    write_rows(&ws.path(&rel), &score.per_pair)?;
    let summary = PredictionSummary {
        entry_id: entry.entry.entry_id.clone(),
        team_id: entry.entry.team_id.clone(),
        mse: score.mse,
        pairs: score.per_pair.len(),
    };
    write_json(&ws.score_summary(&entry.entry.entry_id), &summary)?;
    Ok(ScoredEntry {
        entry_id: summary.entry_id,
        team_id: summary.team_id,
        primary_score: summary.mse,
        breakdown_path: rel,
    })
}

pub fn write_leaderboard(ws: &Workspace, board: &Leaderboard) -> Result<()> {
    write_json(&ws.leaderboard(board.challenge, "json"), board)?;
    write_rows(&ws.leaderboard(board.challenge, "csv"), &board.rows)
}

/// Rank every scored entry of one challenge found under `scores/`.
pub fn rank(ws: &Workspace, kind: EntryKind) -> Result<Leaderboard> {
    let dir = ws.path("scores");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut scored = Vec::new();
    for f in files {
        let value: serde_json::Value = read_json(&f)?;
        let (key, want) = match kind {
            EntryKind::Enhancement => ("mean_si", true),
            EntryKind::Prediction => ("mse", true),
        };
        if let (true, Some(score)) = (want, value.get(key).and_then(|v| v.as_f64())) {
            let id = value["entry_id"].as_str().unwrap_or_default().to_string();
            scored.push(ScoredEntry {
                breakdown_path: Workspace::score_breakdown_rel(&id),
                entry_id: id,
                team_id: value["team_id"].as_str().unwrap_or_default().to_string(),
                primary_score: score,
            });
        }
    }
    let board = rank_and_cap(kind, &scored);
    write_leaderboard(ws, &board)?;
    Ok(board)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenes: usize,
    pub test_scenes: usize,
    pub listeners: usize,
    pub logistic: FitRecord,
    pub enhancement: Leaderboard,
    pub prediction: Leaderboard,
    pub baseline_mean_si: f64,
    pub passthrough_mean_si: f64,
    /// Mean SI over listeners graded moderate or severe.
    pub baseline_impaired_mean_si: f64,
    pub passthrough_impaired_mean_si: f64,
    pub baseline_prediction_mse: f64,
    pub constant_prediction_mse: f64,
}

pub const BASELINE_ENTRY: &str = "baseline";
pub const PASSTHROUGH_ENTRY: &str = "passthrough";
pub const BASELINE_PRED_ENTRY: &str = "baseline-pred";
pub const CONSTANT_PRED_ENTRY: &str = "constant-mean";

fn impaired_mean(rows: &[PanelRow], listeners: &[Audiogram]) -> f64 {
    let impaired: Vec<&str> = listeners
        .iter()
        .filter(|l| l.category() >= LossCategory::Moderate)
        .map(|l| l.listener_id.as_str())
        .collect();
    mean(rows.iter().filter(|r| impaired.contains(&r.listener_id.as_str())).map(|r| r.si_measured))
}

/// The whole round: dataset, listeners, baseline and reference entries,
/// panel, scores and leaderboards.
pub fn run_all(cfg: &PipelineConfig, ws: &Workspace, exec: Execution) -> Result<RunSummary> {
    cfg.validate().stage("config")?;
    cfg.save(&ws.config()).stage("config")?;
    gen_scenes(cfg, ws).stage("gen-scenes")?;
    let data = render(cfg, ws, exec).stage("render")?;
    let listeners = gen_listeners(cfg, ws).stage("gen-listeners")?;
    let logistic = fit_map(cfg, ws, exec).stage("fit")?;

    let base = enhance_entry(cfg, ws, EnhancerKind::Baseline, BASELINE_ENTRY, "baseline", Split::Test, exec).stage("enhance")?;
    let pass = enhance_entry(cfg, ws, EnhancerKind::Passthrough, PASSTHROUGH_ENTRY, "reference", Split::Test, exec).stage("enhance")?;
    let base_score = score_enhancement(cfg, ws, &base, exec).stage("score-enh")?;
    let pass_score = score_enhancement(cfg, ws, &pass, exec).stage("score-enh")?;
    let enhancement = rank_and_cap(EntryKind::Enhancement, &[base_score.clone(), pass_score.clone()]);
    write_leaderboard(ws, &enhancement).stage("rank")?;

    // Prediction challenge: predict the panel's scores for the baseline aid.
    let cov = coverage(&data, &listeners, Split::Test);
    let base_entry = ingest_entry(&base, EntryKind::Enhancement, &cov).stage("predict")?;
    let pred = predict_entry(cfg, ws, &base_entry, BASELINE_PRED_ENTRY, "baseline", exec).stage("predict")?;
    let panel_csv = ws.panel_table(BASELINE_ENTRY);
    let measured = read_panel_csv(&panel_csv).stage("predict")?;
    let constant = constant_entry(ws, CONSTANT_PRED_ENTRY, "reference", &cov, scoring::mean_si(&measured)).stage("predict")?;
    let pred_score = score_prediction(ws, &pred, &panel_csv).stage("score-pred")?;
    let const_score = score_prediction(ws, &constant, &panel_csv).stage("score-pred")?;
    let prediction = rank_and_cap(EntryKind::Prediction, &[pred_score.clone(), const_score.clone()]);
    write_leaderboard(ws, &prediction).stage("rank")?;

    let pass_rows = read_panel_csv(&ws.panel_table(PASSTHROUGH_ENTRY)).stage("summary")?;
    let summary = RunSummary {
        scenes: data.scenes.len(),
        test_scenes: cov.scene_ids.len(),
        listeners: listeners.len(),
        logistic,
        enhancement,
        prediction,
        baseline_mean_si: base_score.primary_score,
        passthrough_mean_si: pass_score.primary_score,
        baseline_impaired_mean_si: impaired_mean(&measured, &listeners),
        passthrough_impaired_mean_si: impaired_mean(&pass_rows, &listeners),
        baseline_prediction_mse: pred_score.primary_score,
        constant_prediction_mse: const_score.primary_score,
    };
    write_json(&ws.summary(), &summary).stage("summary")?;
    Ok(summary)
}
