use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DirectoryCorpus, SyntheticCorpus, UtteranceStore};
use crate::dataset::SceneGenConfig;
use crate::enhance::ProcessorConfig;
use crate::error::{Error, Result};
use crate::interferers::{DirectorySignalStore, SignalStore, SynthInterfererStore};
use crate::panel::PanelConfig;
use crate::prediction::PredictConfig;
use crate::render::RenderConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CorpusSource {
    Synthetic { size: usize },
    Directory { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterfererSource {
    Synthetic,
    Directory { path: PathBuf },
}

/// The single JSON document that drives every stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub corpus: CorpusSource,
    pub interferers: InterfererSource,
    pub scenes: SceneGenConfig,
    pub render: RenderConfig,
    pub processor: ProcessorConfig,
    pub prediction: PredictConfig,
    pub panel: PanelConfig,
    /// Refit the prediction logistic against the panel on the training split.
    pub fit_logistic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            corpus: CorpusSource::Synthetic { size: 200 },
            interferers: InterfererSource::Synthetic,
            scenes: SceneGenConfig::default(),
            render: RenderConfig::default(),
            processor: ProcessorConfig::default(),
            prediction: PredictConfig::default(),
            panel: PanelConfig {
                listener_count: 10,
                ..Default::default()
            },
            fit_logistic: true,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Checks everything that can be checked before any audio is produced.
    pub fn validate(&self) -> Result<()> {
        self.scenes.validate()?;
        self.processor.validate()?;
        self.prediction.map.validate()?;
        self.panel.validate()?;
        if self.render.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.render.pre_roll_s >= 0.0 && self.render.post_roll_s >= 0.0) {
            return Err(Error::Config("pre/post roll must be non-negative".into()));
        }
        if let CorpusSource::Synthetic { size } = self.corpus {
            if size < self.scenes.scene_count {
                return Err(Error::InsufficientCorpus {
                    available: size,
                    requested: self.scenes.scene_count,
                });
            }
        }
        Ok(())
    }

    pub fn open_corpus(&self) -> Result<Box<dyn UtteranceStore>> {
        Ok(match &self.corpus {
            CorpusSource::Synthetic { size } => {
                Box::new(SyntheticCorpus::new(*size, crate::dsp::mix_seed(self.seed, &["corpus"])))
            }
            CorpusSource::Directory { path } => Box::new(DirectoryCorpus::open(path)?),
        })
    }

    pub fn open_interferers(&self) -> Result<Box<dyn SignalStore>> {
        Ok(match &self.interferers {
            InterfererSource::Synthetic => Box::new(SynthInterfererStore::new(crate::dsp::mix_seed(
                self.seed,
                &["interferers"],
            ))),
            InterfererSource::Directory { path } => Box::new(DirectorySignalStore::open(path)?),
        })
    }
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = PipelineConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"seed": 9, "scenes": {"scene_count": 4}}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scenes.scene_count, 4);
        assert_eq!(cfg.scenes.rt60_range, [0.2, 0.5]);
    }

    #[test]
    fn reverberation_outside_range_fails_validation() {
        let mut cfg = PipelineConfig::default();
        cfg.scenes.rt60_range = [0.01, 0.3];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
