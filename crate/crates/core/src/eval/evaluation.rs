use std::collections::BTreeMap;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, Split, TaskSpec};
use crate::error::{Error, Result};
use crate::nn::layers::{sigmoid, softmax_last};
use crate::nn::BuiltModel;
use crate::train::{evaluate_split, BestRecord, CheckpointStore};

/// K×K counts, rows are true classes and columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> usize {
        self.counts[true_class][predicted]
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        (0..self.k())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn trace(&self) -> usize {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// `trace / total`, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.trace() as f64 / n as f64,
        }
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Evaluation(format!(
            "label vectors differ in length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= k || p >= k {
            return Err(Error::Evaluation(format!(
                "class id out of range for {k} classes: ({t}, {p})"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Hard labels from probability rows: `p ≥ 0.5` for binary tasks, the first
/// maximal entry otherwise.
pub fn argmax_labels(rows: &[Vec<f32>], task: &TaskSpec) -> Result<Vec<usize>> {
    let width = task.output_units;
    rows.iter()
        .map(|row| {
            if row.len() != width {
                return Err(Error::Evaluation(format!(
                    "probability row has width {}, expected {width}",
                    row.len()
                )));
            }
            if task.is_binary() {
                return Ok((row[0] >= 0.5) as usize);
            }
            let mut best = 0;
            for (i, &p) in row.iter().enumerate().skip(1) {
                if p > row[best] {
                    best = i;
                }
            }
            Ok(best)
        })
        .collect()
}

/// Output-layer probabilities as rows, from logits.
pub fn probability_rows(logits: &Tensor, task: &TaskSpec) -> Result<Vec<Vec<f32>>> {
    let probs = if task.is_binary() {
        sigmoid(logits)?
    } else {
        softmax_last(logits)?
    };
    Ok(probs.to_vec2::<f32>()?)
}

/// Metrics and confusion matrices per evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
    pub confusion: BTreeMap<String, ConfusionMatrix>,
    pub class_index: BTreeMap<String, usize>,
    /// Checkpoint loaded before evaluation, if any.
    pub loaded_checkpoint: Option<BestRecord>,
}

impl EvaluationReport {
    pub fn splits(&self) -> Vec<&str> {
        self.metrics.keys().map(String::as_str).collect()
    }

    pub fn metric(&self, split: &str, name: &str) -> Option<f64> {
        self.metrics.get(split)?.get(name).copied()
    }
}

/// Evaluates the test split and, when present, the external test split.
/// With `auto_mode` the best checkpoint is loaded first.
pub fn auto_evaluate(
    model: &BuiltModel,
    store: &CheckpointStore,
    data: &DatasetBundle,
    metrics: &[String],
    auto_mode: bool,
) -> Result<EvaluationReport> {
    if !data.has_split(Split::Test) {
        return Err(Error::EmptySplit("test".into()));
    }
    let loaded_checkpoint = if auto_mode {
        Some(store.restore(model)?)
    } else {
        None
    };
    let task = data.task();
    let mut report = EvaluationReport {
        metrics: BTreeMap::new(),
        confusion: BTreeMap::new(),
        class_index: task.class_index.clone(),
        loaded_checkpoint,
    };
    for split in [Split::Test, Split::ExternalTest] {
        if !data.has_split(split) {
            continue;
        }
        let eval = evaluate_split(model, data, split, metrics)?;
        let cm = confusion(&eval.y_true, &eval.y_pred, task.num_classes)?;
        report.metrics.insert(split.name().to_string(), eval.metrics);
        report.confusion.insert(split.name().to_string(), cm);
    }
    Ok(report)
}
