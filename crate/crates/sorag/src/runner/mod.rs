//! Experiment orchestration: three protocols over one corpus.
//!
//! Each experiment is described by an [`ExperimentSpec`] loaded from
//! JSON, runs against a knowledge base plus a question set, and emits
//! a CSV (the contract), a markdown rendering (cosmetic), and a
//! manifest carrying the configuration hash and failure counters.
//! Reruns with the same spec, corpus, and providers produce byte
//! identical output files.

mod protocols;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Caps, EngineError, PipelineConfig, ThresholdPolicy};
use crate::ingest::IngestError;
use crate::stats::StatsError;
use crate::util::fingerprint;

pub use protocols::{
    run_experiment, run_rq1_grid, run_rq2_adaptive, run_rq3_models, ExperimentProviders,
    ModelArm,
};
pub use report::{
    ExperimentManifest, FailureCounts, Rq1Report, Rq1Row, Rq2Report, Rq2Row, Rq3Report, Rq3Row,
};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("experiment configuration: {0}")]
    BadSpec(String),
    #[error("spec file {path}: {message}")]
    SpecFile { path: String, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which of the three evaluation protocols to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rq1Grid,
    Rq2Adaptive,
    Rq3Models,
}

impl ExperimentKind {
    /// Stable file-name stem for this experiment's outputs.
    pub fn slug(self) -> &'static str {
        match self {
            ExperimentKind::Rq1Grid => "rq1_grid",
            ExperimentKind::Rq2Adaptive => "rq2_adaptive",
            ExperimentKind::Rq3Models => "rq3_models",
        }
    }
}

/// A generation model to evaluate. The seed only matters for mock
/// providers, which derive their replies from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
}

/// A pipeline reference in a spec file: either a preset name such as
/// "HB1" or a spelled-out configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PipelineEntry {
    Preset(String),
    Full(PipelineConfig),
}

/// The on-disk description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub question_set: PathBuf,
    pub corpus: PathBuf,
    /// Pipelines for the grid protocol; the bucket and model protocols
    /// use the first entry and default to HB1 when empty.
    #[serde(default)]
    pub pipelines: Vec<PipelineEntry>,
    /// Fixed thresholds for the grid protocol; empty means 0.1 to 0.9.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    /// Relaxation policy for the adaptive protocols; defaults to the
    /// 0.9 start, 0.1 step, 0.5 floor schedule.
    #[serde(default)]
    pub policy: Option<ThresholdPolicy>,
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|e| RunnerError::SpecFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| RunnerError::SpecFile {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RunnerError> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        text.push('\n');
        Ok(fs::write(path, text)?)
    }

    /// Pipelines with preset names resolved and labels normalized.
    /// Empty defaults to every named preset for the grid protocol and
    /// to HB1 alone for the others.
    pub fn resolved_pipelines(&self) -> Result<Vec<PipelineConfig>, RunnerError> {
        if self.pipelines.is_empty() {
            return Ok(match self.kind {
                ExperimentKind::Rq1Grid => PipelineConfig::presets(),
                _ => vec![PipelineConfig::from_preset("HB1").expect("built-in preset")],
            });
        }
        self.pipelines
            .iter()
            .map(|entry| match entry {
                PipelineEntry::Preset(name) => PipelineConfig::from_preset(name)
                    .map_err(|_| RunnerError::BadSpec(format!("unknown pipeline preset {name:?}"))),
                PipelineEntry::Full(config) => Ok(PipelineConfig::new(
                    config.query_source,
                    config.retrieval_target,
                    config.granularity,
                )),
            })
            .collect()
    }

    /// Grid thresholds, defaulting to 0.1 through 0.9.
    pub fn effective_thresholds(&self) -> Vec<f64> {
        if self.thresholds.is_empty() {
            (1..=9).map(|i| i as f64 / 10.0).collect()
        } else {
            self.thresholds.clone()
        }
    }

    /// Relaxation policy, defaulting to the standard schedule.
    pub fn effective_policy(&self) -> ThresholdPolicy {
        self.policy.unwrap_or_else(ThresholdPolicy::adaptive_default)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let pipelines = self.resolved_pipelines()?;
        match self.kind {
            ExperimentKind::Rq1Grid => {
                if pipelines.is_empty() {
                    return Err(RunnerError::BadSpec("no pipelines configured".to_string()));
                }
                for tau in self.effective_thresholds() {
                    if !tau.is_finite() || !(0.0..=1.0).contains(&tau) {
                        return Err(RunnerError::BadSpec(format!(
                            "threshold {tau} is outside [0, 1]"
                        )));
                    }
                }
            }
            ExperimentKind::Rq2Adaptive => {
                self.effective_policy()
                    .validate()
                    .map_err(|e| RunnerError::BadSpec(e.to_string()))?;
            }
            ExperimentKind::Rq3Models => {
                self.effective_policy()
                    .validate()
                    .map_err(|e| RunnerError::BadSpec(e.to_string()))?;
                if self.models.is_empty() {
                    return Err(RunnerError::BadSpec(
                        "the model protocol needs at least one model".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Stable hash of everything that shapes the run, stamped on every
    /// report row so results stay traceable to their configuration.
    pub fn config_hash(&self) -> Result<String, RunnerError> {
        #[derive(Serialize)]
        struct HashView<'a> {
            kind: ExperimentKind,
            pipelines: Vec<PipelineConfig>,
            thresholds: Vec<f64>,
            policy: ThresholdPolicy,
            models: &'a [ModelConfig],
            seeds: &'a BTreeMap<String, u64>,
            caps: Caps,
        }
        let view = HashView {
            kind: self.kind,
            pipelines: self.resolved_pipelines()?,
            thresholds: self.effective_thresholds(),
            policy: self.effective_policy(),
            models: &self.models,
            seeds: &self.seeds,
            caps: Caps::default(),
        };
        let bytes = serde_json::to_vec(&view)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(fingerprint(&bytes))
    }
}
