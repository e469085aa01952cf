//! Classification metrics computed from hard labels.
//!
//! Binary tasks use class 1 as the positive class. Multiclass tasks
//! macro-average per-class values over the labels that occur in either the
//! targets or the predictions; an undefined ratio counts as 0.

use crate::data::TaskSpec;
use crate::error::{Error, Result};

pub const METRICS: [&str; 3] = ["accuracy", "precision", "recall"];

/// Whether `name` can be monitored given the configured metrics.
pub fn is_monitorable(name: &str, metrics: &[String]) -> bool {
    let base = name.strip_prefix("val_").unwrap_or(name);
    base == "loss" || metrics.iter().any(|m| m == base)
}

/// `min` for loss-like names, `max` for everything else.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    pub fn for_metric(name: &str) -> Self {
        if name.contains("loss") {
            Direction::Min
        } else {
            Direction::Max
        }
    }

    /// Strict improvement; NaN never improves.
    pub fn improves(self, candidate: f64, best: f64) -> bool {
        match self {
            Direction::Min => candidate < best,
            Direction::Max => candidate > best,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Accuracy,
    Precision,
    Recall,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Metric {
    kind: MetricKind,
    num_classes: usize,
    binary: bool,
}

pub fn normalize_metric(name: &str, task: &TaskSpec) -> Result<Metric> {
    let kind = match name {
        "accuracy" => MetricKind::Accuracy,
        "precision" => MetricKind::Precision,
        "recall" => MetricKind::Recall,
        other => return Err(Error::UnknownMetric(other.to_string())),
    };
    Ok(Metric {
        kind,
        num_classes: task.num_classes,
        binary: task.is_binary(),
    })
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metric {
    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MetricKind::Accuracy => "accuracy",
            MetricKind::Precision => "precision",
            MetricKind::Recall => "recall",
        }
    }

    pub fn compute(&self, y_true: &[usize], y_pred: &[usize]) -> f64 {
        assert_eq!(y_true.len(), y_pred.len(), "label vectors differ in length");
        let k = self.num_classes;
        let mut tp = vec![0usize; k];
        let mut true_count = vec![0usize; k];
        let mut pred_count = vec![0usize; k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            true_count[t] += 1;
            pred_count[p] += 1;
            if t == p {
                tp[t] += 1;
            }
        }
        match self.kind {
            MetricKind::Accuracy => ratio(tp.iter().sum(), y_true.len()),
            MetricKind::Precision if self.binary => ratio(tp[1], pred_count[1]),
            MetricKind::Recall if self.binary => ratio(tp[1], true_count[1]),
            MetricKind::Precision | MetricKind::Recall => {
                let present: Vec<usize> = (0..k)
                    .filter(|&c| true_count[c] > 0 || pred_count[c] > 0)
                    .collect();
                if present.is_empty() {
                    return 0.0;
                }
                let sum: f64 = present
                    .iter()
                    .map(|&c| {
                        let den = if self.kind == MetricKind::Precision {
                            pred_count[c]
                        } else {
                            true_count[c]
                        };
                        ratio(tp[c], den)
                    })
                    .sum();
                sum / present.len() as f64
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(k: usize) -> TaskSpec {
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        TaskSpec::from_class_names(&names).unwrap()
    }

    #[test]
    fn binary_accuracy_from_threshold() {
        let m = normalize_metric("accuracy", &task(2)).unwrap();
        let preds: Vec<usize> = [0.9f32, 0.2].iter().map(|&p| (p >= 0.5) as usize).collect();
        assert_eq!(m.compute(&[1, 0], &preds), 1.0);
    }

    #[test]
    fn macro_recall_toy_confusion() {
        // diag [2,1,1] plus a class-1 sample predicted as class 2
        let y_true = [0, 0, 1, 1, 2];
        let y_pred = [0, 0, 1, 2, 2];
        let recall = normalize_metric("recall", &task(3)).unwrap().compute(&y_true, &y_pred);
        let expected = (2.0 / 2.0 + 1.0 / 2.0 + 1.0 / 1.0) / 3.0;
        assert!((recall - expected).abs() < 1e-12);
        let precision = normalize_metric("precision", &task(3))
            .unwrap()
            .compute(&y_true, &y_pred);
        let expected = (2.0 / 2.0 + 1.0 / 1.0 + 1.0 / 2.0) / 3.0;
        assert!((precision - expected).abs() < 1e-12);
    }

    #[test]
    fn binary_precision_without_positive_predictions() {
        let m = normalize_metric("precision", &task(2)).unwrap();
        assert_eq!(m.compute(&[1, 0], &[0, 0]), 0.0);
    }

    #[test]
    fn unknown_metric() {
        assert!(matches!(
            normalize_metric("f1", &task(3)),
            Err(Error::UnknownMetric(n)) if n == "f1"
        ));
    }

    #[test]
    fn monitor_names() {
        let metrics = vec!["accuracy".to_string()];
        assert!(is_monitorable("val_loss", &metrics));
        assert!(is_monitorable("loss", &metrics));
        assert!(is_monitorable("val_accuracy", &metrics));
        assert!(!is_monitorable("val_recall", &metrics));
        assert_eq!(Direction::for_metric("val_loss"), Direction::Min);
        assert_eq!(Direction::for_metric("val_recall"), Direction::Max);
        assert!(!Direction::Min.improves(0.5, 0.5));
        assert!(!Direction::Max.improves(f64::NAN, 0.5));
    }
}
