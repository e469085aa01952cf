use std::collections::HashMap;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::metrics::Direction;
use crate::error::{Error, Result};
use crate::nn::BuiltModel;

pub const WEIGHTS_EXTENSION: &str = "safetensors";

/// Best epoch (0-based, main phase) and its monitored value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub value: f64,
}

/// Tracks the best value of one monitored metric and keeps the matching
/// weights, in memory and optionally on disk.
///
/// Only the latest best file is kept on disk, named
/// `weights_best_<metric>_<epoch>.safetensors`.
#[derive(Debug)]
pub struct CheckpointStore {
    dir: Option<PathBuf>,
    metric: String,
    direction: Direction,
    best: Option<BestRecord>,
    snapshot: Option<HashMap<String, Tensor>>,
    path: Option<PathBuf>,
}

impl CheckpointStore {
    /// Store writing files under `dir`, which is created if missing.
    pub fn new(dir: impl Into<PathBuf>, metric: impl Into<String>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let metric = metric.into();
        Ok(CheckpointStore {
            dir: Some(dir),
            direction: Direction::for_metric(&metric),
            metric,
            best: None,
            snapshot: None,
            path: None,
        })
    }

    /// Store keeping the best weights in memory only.
    pub fn in_memory(metric: impl Into<String>) -> Self {
        let metric = metric.into();
        CheckpointStore {
            dir: None,
            direction: Direction::for_metric(&metric),
            metric,
            best: None,
            snapshot: None,
            path: None,
        }
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn best(&self) -> Option<BestRecord> {
        self.best
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// File holding the best weights, when persisted.
    pub fn best_path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn file_name(metric: &str, epoch: usize) -> String {
        format!("weights_best_{metric}_{epoch}.{WEIGHTS_EXTENSION}")
    }

    /// Records `value` for `epoch`; snapshots the model when it strictly
    /// improves. Returns whether it improved.
    pub fn update(&mut self, epoch: usize, value: f64, model: &BuiltModel) -> Result<bool> {
        let improved = match self.best {
            None => !value.is_nan(),
            Some(best) => self.direction.improves(value, best.value),
        };
        if !improved {
            return Ok(false);
        }
        self.best = Some(BestRecord { epoch, value });
        self.snapshot = Some(model.weights()?);
        if let Some(dir) = &self.dir {
            let path = dir.join(Self::file_name(&self.metric, epoch));
            model.save_weights(&path)?;
            if let Some(old) = self.path.replace(path) {
                if Some(&old) != self.path.as_ref() {
                    std::fs::remove_file(&old).map_err(|e| Error::io(&old, e))?;
                }
            }
        }
        Ok(true)
    }

    /// Loads the best weights into `model`.
    pub fn restore(&self, model: &BuiltModel) -> Result<BestRecord> {
        let best = self
            .best
            .ok_or_else(|| Error::Checkpoint(format!("no checkpoint recorded for `{}`", self.metric)))?;
        match (&self.snapshot, &self.path) {
            (Some(weights), _) => model.set_weights(weights)?,
            (None, Some(path)) => model.load_weights(path)?,
            (None, None) => {
                return Err(Error::Checkpoint("checkpoint weights are missing".into()));
            }
        }
        Ok(best)
    }
}
