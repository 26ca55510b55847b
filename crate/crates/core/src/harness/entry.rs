//! Challenge entries and their validation on ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::read_json;
use crate::enhance::EnhancedOutput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Enhancement,
    Prediction,
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntryKind::Enhancement => "enhancement",
            EntryKind::Prediction => "prediction",
        })
    }
}

impl FromStr for EntryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "enhancement" | "enh" => Ok(EntryKind::Enhancement),
            "prediction" | "pred" => Ok(EntryKind::Prediction),
            _ => Err(Error::InvalidArgument(format!("unknown entry kind `{s}`"))),
        }
    }
}

/// How the causality gate reaches an enhancement entry's processor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProcessorDecl {
    /// The baseline aid, configured from the pipeline config.
    Baseline,
    /// A built-in transform such as `passthrough` or `advance:6`.
    Builtin { transform: String },
    /// An external program called as `<argv..> <in.wav> <out.wav>`.
    Command { argv: Vec<String>, channels: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EntryMetadata {
    pub system_description: Option<PathBuf>,
    pub external_data: bool,
    /// Administrative only; never changes scoring.
    pub anonymous: bool,
    pub processor: Option<ProcessorDecl>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub entry_id: String,
    pub team_id: String,
    pub kind: EntryKind,
    /// Directory of `_enh.wav` files, or a CSV of predicted scores;
    /// relative paths are resolved against the entry file's directory.
    pub payload_path: PathBuf,
    #[serde(default)]
    pub metadata: EntryMetadata,
}

impl Entry {
    pub const FILE_NAME: &'static str = "entry.json";

    pub fn payload(&self, entry_dir: &Path) -> PathBuf {
        if self.payload_path.is_absolute() {
            self.payload_path.clone()
        } else {
            entry_dir.join(&self.payload_path)
        }
    }
}

/// The (scene, listener) pairs an entry must cover.
#[derive(Debug, Clone, PartialEq)]
pub struct Coverage {
    pub scene_ids: Vec<String>,
    pub listener_ids: Vec<String>,
}

impl Coverage {
    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.scene_ids
            .iter()
            .flat_map(move |s| self.listener_ids.iter().map(move |l| (s.as_str(), l.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub scene_id: String,
    pub listener_id: String,
    pub score: f64,
}

/// A validated entry, with the predictions loaded for prediction entries.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestedEntry {
    pub entry: Entry,
    pub root: PathBuf,
    pub predictions: Option<BTreeMap<(String, String), f64>>,
}

impl IngestedEntry {
    pub fn payload(&self) -> PathBuf {
        self.entry.payload(&self.root)
    }
}

fn check_wav(path: &Path) -> Result<()> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.channels != 2 {
        return Err(Error::Schema(format!(
            "{}: expected stereo, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["scene_id", "listener_id", "score"] {
        return Err(Error::Schema(format!(
            "{}: header must be scene_id,listener_id,score",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| Error::Schema(format!("{}: {e}", path.display()))))
        .collect()
}

/// Load `entry.json` (or an entry directory containing it) and validate its
/// payload against the pairs it must cover.
pub fn ingest_entry(path: &Path, kind: EntryKind, coverage: &Coverage) -> Result<IngestedEntry> {
    let file = if path.is_dir() {
        path.join(Entry::FILE_NAME)
    } else {
        path.to_path_buf()
    };
    let root = file.parent().unwrap_or(Path::new(".")).to_path_buf();
    let entry: Entry = read_json(&file)?;
    if entry.kind != kind {
        return Err(Error::Schema(format!(
            "entry {} is a {} entry, expected {kind}",
            entry.entry_id, entry.kind
        )));
    }
    if entry.entry_id.is_empty() || entry.team_id.is_empty() {
        return Err(Error::Schema("entry_id and team_id must be non-empty".into()));
    }
    let payload = entry.payload(&root);
    let predictions = match kind {
        EntryKind::Enhancement => {
            let mut missing = BTreeSet::new();
            for (scene, listener) in coverage.pairs() {
                let wav = payload.join(EnhancedOutput::file_name(scene, listener));
                if wav.is_file() {
                    check_wav(&wav)?;
                } else {
                    missing.insert(scene.to_string());
                }
            }
            if !missing.is_empty() {
                return Err(Error::IncompleteEntry(missing.into_iter().collect()));
            }
            None
        }
        EntryKind::Prediction => {
            let rows = read_predictions(&payload)?;
            let mut table = BTreeMap::new();
            for r in rows {
                if !(0.0..=1.0).contains(&r.score) {
                    return Err(Error::Range {
                        key: format!("score {}/{}", r.scene_id, r.listener_id),
                        value: r.score,
                        min: 0.0,
                        max: 1.0,
                    });
                }
                if table
                    .insert((r.scene_id.clone(), r.listener_id.clone()), r.score)
                    .is_some()
                {
                    return Err(Error::Schema(format!(
                        "duplicate prediction for {}/{}",
                        r.scene_id, r.listener_id
                    )));
                }
            }
            let missing: BTreeSet<String> = coverage
                .pairs()
                .filter(|(s, l)| !table.contains_key(&(s.to_string(), l.to_string())))
                .map(|(s, _)| s.to_string())
                .collect();
            if !missing.is_empty() {
                return Err(Error::IncompleteEntry(missing.into_iter().collect()));
            }
            Some(table)
        }
    };
    Ok(IngestedEntry {
        entry,
        root,
        predictions,
    })
}
