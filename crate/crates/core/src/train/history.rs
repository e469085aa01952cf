use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warm,
    Main,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warm => "warm",
            Phase::Main => "main",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    /// 0-based within the phase.
    pub epoch: usize,
    /// Train values under the plain name, validation values under `val_<name>`.
    pub metrics: BTreeMap<String, f64>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn extend(&mut self, other: TrainingHistory) {
        self.records.extend(other.records);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &EpochRecord> {
        self.records.iter().filter(move |r| r.phase == phase)
    }

    pub fn epochs(&self, phase: Phase) -> usize {
        self.phase(phase).count()
    }

    /// One metric across a phase, in epoch order.
    pub fn series(&self, phase: Phase, name: &str) -> Vec<f64> {
        self.phase(phase)
            .map(|r| r.metrics.get(name).copied().unwrap_or(f64::NAN))
            .collect()
    }

    /// Base metric names (without `val_`), sorted with `loss` first.
    pub fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .records
            .iter()
            .flat_map(|r| r.metrics.keys())
            .filter(|k| !k.starts_with("val_"))
            .cloned()
            .collect();
        names.sort_by_key(|n| (n != "loss", n.clone()));
        names.dedup();
        names
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(phase: Phase, epoch: usize, loss: f64) -> EpochRecord {
        EpochRecord {
            phase,
            epoch,
            metrics: BTreeMap::from([
                ("loss".into(), loss),
                ("accuracy".into(), 0.5),
                ("val_loss".into(), loss + 1.0),
            ]),
            wall_clock_secs: 0.0,
        }
    }

    #[test]
    fn series_by_phase() {
        let mut h = TrainingHistory::default();
        h.push(rec(Phase::Warm, 0, 3.0));
        h.push(rec(Phase::Main, 0, 2.0));
        h.push(rec(Phase::Main, 1, 1.0));
        assert_eq!(h.series(Phase::Main, "val_loss"), vec![3.0, 2.0]);
        assert_eq!(h.epochs(Phase::Warm), 1);
        assert_eq!(h.metric_names(), vec!["loss", "accuracy"]);
    }
}
