use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layout::SplitLayout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Binary,
    Multiclass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Sigmoid,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BinaryCrossentropy,
    CategoricalCrossentropy,
}

/// Classification task inferred from the class folders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub num_classes: usize,
    pub mode: TaskMode,
    pub output_units: usize,
    pub output_activation: OutputActivation,
    pub loss: LossKind,
    /// Label to contiguous id, in sorted-label order.
    pub class_index: BTreeMap<String, usize>,
}

impl TaskSpec {
    pub fn from_class_names(names: &[String]) -> Result<Self> {
        let mut sorted: Vec<String> = names.to_vec();
        sorted.sort();
        sorted.dedup();
        if sorted.len() < 2 {
            return Err(Error::Task(format!(
                "at least 2 classes are required, found {}",
                sorted.len()
            )));
        }
        let num_classes = sorted.len();
        let class_index = sorted
            .into_iter()
            .enumerate()
            .map(|(i, n)| (n, i))
            .collect();
        let binary = num_classes == 2;
        Ok(TaskSpec {
            num_classes,
            mode: if binary { TaskMode::Binary } else { TaskMode::Multiclass },
            output_units: if binary { 1 } else { num_classes },
            output_activation: if binary {
                OutputActivation::Sigmoid
            } else {
                OutputActivation::Softmax
            },
            loss: if binary {
                LossKind::BinaryCrossentropy
            } else {
                LossKind::CategoricalCrossentropy
            },
            class_index,
        })
    }

    pub fn is_binary(&self) -> bool {
        self.mode == TaskMode::Binary
    }

    /// Class names ordered by id.
    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.num_classes];
        for (name, &id) in &self.class_index {
            names[id] = name.clone();
        }
        names
    }
}

pub fn infer_task(layout: &SplitLayout) -> Result<TaskSpec> {
    TaskSpec::from_class_names(&layout.class_names)
}

/// Balanced class weights `N / (K * n_c)`.
pub fn compute_class_weights(counts: &BTreeMap<String, usize>) -> Result<BTreeMap<String, f64>> {
    if counts.is_empty() {
        return Err(Error::Task("class weights need at least one class".into()));
    }
    if let Some((name, _)) = counts.iter().find(|(_, &n)| n == 0) {
        return Err(Error::Task(format!("class `{name}` has zero samples")));
    }
    let total: usize = counts.values().sum();
    let k = counts.len();
    Ok(counts
        .iter()
        .map(|(name, &n)| (name.clone(), total as f64 / (k as f64 * n as f64)))
        .collect())
}
