use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::evaluation::EvaluationReport;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::ModelSpec;
use crate::train::{BestRecord, CheckpointStore, TrainingHistory};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArtifactPaths {
    pub plots: Vec<PathBuf>,
    pub weights: Vec<PathBuf>,
}

impl ArtifactPaths {
    pub fn all(&self) -> impl Iterator<Item = &PathBuf> {
        self.weights.iter().chain(&self.plots)
    }
}

/// Everything one run produced, in the form written to `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub config: Value,
    pub seed: u64,
    pub model: ModelSpec,
    pub history: TrainingHistory,
    pub report: EvaluationReport,
    pub monitored_metric: String,
    pub best: Option<BestRecord>,
    pub artifacts: ArtifactPaths,
}

impl ResultsBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.model.task.class_names()
    }
}

/// Collects the run outputs. Every artifact path must exist.
pub fn build_results(
    config: &ExperimentConfig,
    seed: u64,
    model: ModelSpec,
    history: TrainingHistory,
    report: EvaluationReport,
    store: &CheckpointStore,
    artifacts: ArtifactPaths,
) -> Result<ResultsBundle> {
    for path in artifacts.all() {
        if !path.exists() {
            return Err(Error::Evaluation(format!(
                "artifact {} does not exist",
                path.display()
            )));
        }
    }
    Ok(ResultsBundle {
        config: config.snapshot(),
        seed,
        model,
        history,
        report,
        monitored_metric: store.metric().to_string(),
        best: store.best(),
        artifacts,
    })
}
