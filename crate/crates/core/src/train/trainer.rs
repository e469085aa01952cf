use std::collections::BTreeMap;
use std::time::Instant;

use candle_core::{Device, Tensor, Var, D};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use super::callback::{CallbackHandle, TrainingControl};
use super::checkpoint::CheckpointStore;
use super::history::{EpochRecord, Phase, TrainingHistory};
use super::metrics::{is_monitorable, normalize_metric, Direction, Metric};
use super::optimizer::{build_optimizer, Optimizer};
use crate::config::ExperimentConfig;
use crate::data::{compute_class_weights, DatasetBundle, Split, TaskSpec};
use crate::eval::{argmax_labels, probability_rows};
use crate::error::{Error, Result};
use crate::nn::layers::log_softmax_last;
use crate::nn::BuiltModel;
use crate::seed::derive_seed;

/// Shuffle/augmentation streams of the warm phase start here so they never
/// coincide with main-phase epochs.
const WARM_STREAM_OFFSET: u64 = 1 << 32;

/// `fraction == 0` disables early stopping (patience equals `epochs`);
/// otherwise `max(1, round(fraction · epochs))`, halves rounded away from 0.
pub fn compute_patience(fraction: f64, epochs: usize) -> usize {
    if fraction <= 0.0 {
        return epochs;
    }
    // snap away binary noise such as 0.7 * 5 = 3.4999999999999996
    let product = (fraction * epochs as f64 * 1e9).round() / 1e9;
    (product.round() as usize).max(1)
}

/// Early-stopping counter over one monitored series.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMonitor {
    direction: Direction,
    patience: usize,
    best: Option<f64>,
    wait: usize,
}

impl EpochMonitor {
    pub fn new(direction: Direction, patience: usize) -> Self {
        EpochMonitor {
            direction,
            patience,
            best: None,
            wait: 0,
        }
    }

    /// Feeds one epoch's value; true when training should stop now.
    pub fn observe(&mut self, value: f64) -> bool {
        let improved = match self.best {
            None => !value.is_nan(),
            Some(best) => self.direction.improves(value, best),
        };
        if improved {
            self.best = Some(value);
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        self.wait >= self.patience
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn wait(&self) -> usize {
        self.wait
    }
}

/// Training hyperparameters drawn from the experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub optimizer_name: String,
    pub learning_rate: f64,
    pub optimizer_params: BTreeMap<String, Value>,
    pub metrics: Vec<String>,
    pub class_weights: bool,
    pub early_stop: f64,
    pub monitor: String,
}

impl TrainSettings {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        let t = &config.training;
        TrainSettings {
            epochs: t.epochs as usize,
            optimizer_name: t.optimizer_name.clone(),
            learning_rate: t.learning_rate,
            optimizer_params: t.add_optimizer_params.clone(),
            metrics: t.metrics.clone(),
            class_weights: t.class_weights,
            early_stop: t.early_stop,
            monitor: config.saving.save_best_weights.clone(),
        }
    }

    pub fn optimizer(&self) -> Result<Optimizer> {
        build_optimizer(&self.optimizer_name, self.learning_rate, &self.optimizer_params)
    }

    fn metric_computers(&self, task: &TaskSpec) -> Result<Vec<Metric>> {
        self.metrics.iter().map(|m| normalize_metric(m, task)).collect()
    }
}

/// Per-sample cross-entropy from output-layer logits.
///
/// Binary tasks take `(b, 1)` logits and `(b,)` 0/1 labels; multiclass tasks
/// take `(b, K)` logits and one-hot labels.
pub fn per_sample_loss(logits: &Tensor, labels: &Tensor, task: &TaskSpec) -> Result<Tensor> {
    if task.is_binary() {
        let z = logits.squeeze(1)?;
        // max(z, 0) - z*y + log(1 + exp(-|z|))
        let soft = (z.abs()?.neg()?.exp()? + 1.0)?.log()?;
        Ok(((z.relu()? - (&z * labels)?)? + soft)?)
    } else {
        Ok((labels * log_softmax_last(logits)?)?.sum(D::Minus1)?.neg()?)
    }
}

/// Mean of per-sample losses, each scaled by its class weight when given.
pub fn weighted_mean(losses: &Tensor, label_ids: &[usize], class_weights: Option<&[f32]>) -> Result<Tensor> {
    match class_weights {
        None => Ok(losses.mean_all()?),
        Some(w) => {
            let per: Vec<f32> = label_ids.iter().map(|&id| w[id]).collect();
            let per = Tensor::from_vec(per, label_ids.len(), &Device::Cpu)?;
            Ok(((losses * per)?.sum_all()? / label_ids.len() as f64)?)
        }
    }
}

/// Class weights indexed by class id, from the train split counts.
pub fn class_weight_vector(data: &DatasetBundle) -> Result<Vec<f32>> {
    let weights = compute_class_weights(&data.train_counts())?;
    let task = data.task();
    let mut out = vec![1.0f32; task.num_classes];
    for (name, w) in weights {
        out[task.class_index[&name]] = w as f32;
    }
    Ok(out)
}

/// Loss and metrics of one split evaluated in inference mode.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEvaluation {
    pub split: Split,
    /// Includes `loss`.
    pub metrics: BTreeMap<String, f64>,
    pub y_true: Vec<usize>,
    pub y_pred: Vec<usize>,
    /// One row per sample: a single probability for binary tasks, K otherwise.
    pub probabilities: Vec<Vec<f32>>,
}

/// Evaluates `split` in index order with no augmentation. The loss is the
/// unweighted cross-entropy plus any L2 penalty.
pub fn evaluate_split(
    model: &BuiltModel,
    data: &DatasetBundle,
    split: Split,
    metrics: &[String],
) -> Result<SplitEvaluation> {
    let task = data.task();
    let computers: Vec<Metric> = metrics
        .iter()
        .map(|m| normalize_metric(m, task))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut loss_sum = 0.0f64;
    let mut y_true = Vec::new();
    let mut probabilities = Vec::new();
    for batch in data.eval_batches(split)? {
        let batch = batch?;
        let logits = model.logits(&batch.images, false, &mut rng)?;
        let losses = per_sample_loss(&logits, &batch.labels, task)?;
        loss_sum += losses.sum_all()?.to_scalar::<f32>()? as f64;
        probabilities.extend(probability_rows(&logits, task)?);
        y_true.extend_from_slice(&batch.label_ids);
    }
    let n = y_true.len();
    if n == 0 {
        return Err(Error::EmptySplit(split.name().into()));
    }
    let mut loss = loss_sum / n as f64;
    if let Some(p) = model.l2_penalty()? {
        loss += p.to_scalar::<f32>()? as f64;
    }
    let y_pred = argmax_labels(&probabilities, task)?;
    let mut values = BTreeMap::from([("loss".to_string(), loss)]);
    for m in &computers {
        values.insert(m.name().to_string(), m.compute(&y_true, &y_pred));
    }
    Ok(SplitEvaluation {
        split,
        metrics: values,
        y_true,
        y_pred,
        probabilities,
    })
}

/// One pass over the shuffled training stream; returns train-stream loss and
/// metrics computed from the training-mode outputs of each batch.
fn run_epoch(
    model: &BuiltModel,
    data: &DatasetBundle,
    optimizer: &mut Optimizer,
    vars: &[(String, Var)],
    metrics: &[Metric],
    class_weights: Option<&[f32]>,
    stream: u64,
) -> Result<BTreeMap<String, f64>> {
    let task = data.task();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(data.seed(), "dropout", stream));
    let mut loss_sum = 0.0f64;
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for batch in data.train_batches(stream)? {
        let batch = batch?;
        let logits = model.logits(&batch.images, true, &mut rng)?;
        let losses = per_sample_loss(&logits, &batch.labels, task)?;
        let mut loss = weighted_mean(&losses, &batch.label_ids, class_weights)?;
        if let Some(p) = model.l2_penalty()? {
            loss = (loss + p)?;
        }
        let grads = loss.backward()?;
        optimizer.step(vars, &grads)?;
        loss_sum += loss.to_scalar::<f32>()? as f64 * batch.label_ids.len() as f64;
        y_pred.extend(argmax_labels(&probability_rows(&logits.detach(), task)?, task)?);
        y_true.extend_from_slice(&batch.label_ids);
    }
    let n = y_true.len();
    if n == 0 {
        return Err(Error::EmptySplit("train".into()));
    }
    let mut out = BTreeMap::from([("loss".to_string(), loss_sum / n as f64)]);
    for m in metrics {
        out.insert(m.name().to_string(), m.compute(&y_true, &y_pred));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn merged_record(
    model: &BuiltModel,
    data: &DatasetBundle,
    optimizer: &mut Optimizer,
    vars: &[(String, Var)],
    settings: &TrainSettings,
    metrics: &[Metric],
    class_weights: Option<&[f32]>,
    stream: u64,
) -> Result<BTreeMap<String, f64>> {
    let mut record = run_epoch(model, data, optimizer, vars, metrics, class_weights, stream)?;
    if data.has_split(Split::Val) {
        let val = evaluate_split(model, data, Split::Val, &settings.metrics)?;
        for (k, v) in val.metrics {
            record.insert(format!("val_{k}"), v);
        }
    }
    Ok(record)
}

fn weights_for(settings: &TrainSettings, data: &DatasetBundle) -> Result<Option<Vec<f32>>> {
    if settings.class_weights {
        Ok(Some(class_weight_vector(data)?))
    } else {
        Ok(None)
    }
}

/// Trains only the head with the whole backbone frozen, then restores the
/// model's configured freeze policy. `epochs == 0` is a no-op.
pub fn warm_pretrain(
    model: &mut BuiltModel,
    data: &DatasetBundle,
    epochs: usize,
    optimizer: &Optimizer,
    settings: &TrainSettings,
) -> Result<TrainingHistory> {
    let mut history = TrainingHistory::default();
    if epochs == 0 {
        return Ok(history);
    }
    let metrics = settings.metric_computers(data.task())?;
    let class_weights = weights_for(settings, data)?;
    let previous = model.freeze_backbone();
    let mut optimizer = optimizer.fresh();
    let vars = model.trainable_vars();
    let outcome = (|| -> Result<()> {
        for epoch in 0..epochs {
            let start = Instant::now();
            let metrics = merged_record(
                model,
                data,
                &mut optimizer,
                &vars,
                settings,
                &metrics,
                class_weights.as_deref(),
                WARM_STREAM_OFFSET + epoch as u64,
            )?;
            info!("warm epoch {epoch}: {metrics:?}");
            history.push(EpochRecord {
                phase: Phase::Warm,
                epoch,
                metrics,
                wall_clock_secs: start.elapsed().as_secs_f64(),
            });
        }
        Ok(())
    })();
    model.apply_freeze_policy(&previous)?;
    outcome.map(|_| history)
}

/// Main training phase.
///
/// After each epoch the callbacks run in order with the merged record, then
/// the checkpoint store and the early-stopping monitor see the monitored
/// value. A fresh optimizer state is used regardless of any warm phase.
pub fn train(
    model: &mut BuiltModel,
    data: &DatasetBundle,
    settings: &TrainSettings,
    callbacks: &[CallbackHandle],
    store: &mut CheckpointStore,
) -> Result<TrainingHistory> {
    if data.is_empty(Split::Train) {
        return Err(Error::EmptySplit("train".into()));
    }
    let metrics = settings.metric_computers(data.task())?;
    if !is_monitorable(&settings.monitor, &settings.metrics) {
        return Err(Error::UnknownMetric(settings.monitor.clone()));
    }
    if settings.monitor.starts_with("val_") && !data.has_split(Split::Val) {
        return Err(Error::EmptySplit("val".into()));
    }
    let class_weights = weights_for(settings, data)?;
    let mut optimizer = settings.optimizer()?;
    let vars = model.trainable_vars();
    let patience = compute_patience(settings.early_stop, settings.epochs);
    let mut monitor = EpochMonitor::new(Direction::for_metric(&settings.monitor), patience);
    let mut history = TrainingHistory::default();

    for epoch in 0..settings.epochs {
        let start = Instant::now();
        let record = merged_record(
            model,
            data,
            &mut optimizer,
            &vars,
            settings,
            &metrics,
            class_weights.as_deref(),
            epoch as u64,
        )?;
        info!("epoch {epoch}: {record:?}");
        let mut control = TrainingControl {
            learning_rate: optimizer.learning_rate(),
            stop_training: false,
        };
        for cb in callbacks {
            cb.on_epoch_end(epoch, &record, &mut control);
        }
        optimizer.set_learning_rate(control.learning_rate);
        let value = record[&settings.monitor];
        store.update(epoch, value, model)?;
        let stop = monitor.observe(value);
        history.push(EpochRecord {
            phase: Phase::Main,
            epoch,
            metrics: record,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        });
        if stop {
            info!("early stop after epoch {epoch} (patience {patience})");
            break;
        }
        if control.stop_training {
            break;
        }
    }
    Ok(history)
}
