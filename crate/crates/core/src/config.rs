//! Six-section experiment configuration.
//!
//! A configuration is assembled from a partial nested map (typically read from
//! a TOML or JSON file, or built in code) by filling every missing key with its
//! default. Unknown sections and keys are rejected. Range and cross-field
//! checks are reported by [`ExperimentConfig::validate`], which collects every
//! violation instead of stopping at the first one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::backbone;
use crate::data::augment::ImageTransform;
use crate::error::{Error, Result};
use crate::nn::{Activation, Initializer};
use crate::train::callback::CallbackHandle;
use crate::train::{metrics, optimizer};

pub const SECTIONS: [&str; 6] = ["paths", "model", "training", "evaluation", "saving", "misc"];

/// Top-level entry written by [`ExperimentConfig::snapshot`] to record hooks
/// that cannot be serialized. It is accepted and ignored on input.
pub const HOOKS_RECORD: &str = "hooks";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub train_val_data: PathBuf,
    pub test_data_folder: PathBuf,
    pub external_test_data_folder: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            train_val_data: PathBuf::new(),
            test_data_folder: PathBuf::new(),
            external_test_data_folder: None,
        }
    }
}

/// Layer that turns the backbone feature map into a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Bridge {
    Flatten,
    GlobalAveragePooling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regularization {
    None,
    Dropout,
    L2,
    #[serde(rename = "Dropout+L2")]
    DropoutL2,
}

impl Regularization {
    pub fn uses_dropout(self) -> bool {
        matches!(self, Regularization::Dropout | Regularization::DropoutL2)
    }

    pub fn uses_l2(self) -> bool {
        matches!(self, Regularization::L2 | Regularization::DropoutL2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentationMode {
    None,
    Basic,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// `(height, width)`; resolved from the backbone when absent.
    pub image_size: Option<(u32, u32)>,
    pub transfer_arch: String,
    pub pre_trained: String,
    pub before_dense: Bridge,
    pub dense_layers: Vec<u32>,
    pub dense_activations: String,
    pub initializer: String,
    pub batch_norm: bool,
    pub regularization: Regularization,
    pub l2_strength: f64,
    pub dropout_rate: f64,
    pub unfreeze_block: Vec<String>,
    pub freeze_up_to: Option<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: None,
            transfer_arch: "VGG16".into(),
            pre_trained: "imagenet".into(),
            before_dense: Bridge::Flatten,
            dense_layers: vec![256, 128],
            dense_activations: "elu".into(),
            initializer: "he_normal".into(),
            batch_norm: false,
            regularization: Regularization::None,
            l2_strength: 0.001,
            dropout_rate: 0.3,
            unfreeze_block: Vec::new(),
            freeze_up_to: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub epochs: u32,
    pub batch_size: u32,
    pub learning_rate: f64,
    pub optimizer_name: String,
    pub add_optimizer_params: BTreeMap<String, Value>,
    pub class_weights: bool,
    pub metrics: Vec<String>,
    pub augmentation: AugmentationMode,
    #[serde(skip)]
    pub custom_augmentation: Vec<ImageTransform>,
    #[serde(skip)]
    pub callback: Vec<CallbackHandle>,
    pub early_stop: f64,
    pub warm_pretrain_dense: bool,
    pub warm_pretrain_epochs: u32,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 2e-5,
            optimizer_name: "Adam".into(),
            add_optimizer_params: BTreeMap::new(),
            class_weights: true,
            metrics: vec!["accuracy".into()],
            augmentation: AugmentationMode::Basic,
            custom_augmentation: Vec::new(),
            callback: Vec::new(),
            early_stop: 0.0,
            warm_pretrain_dense: false,
            warm_pretrain_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub auto_mode: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { auto_mode: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SavingConfig {
    pub save_weights: bool,
    pub save_weights_folder: PathBuf,
    pub save_best_weights: String,
}

impl Default for SavingConfig {
    fn default() -> Self {
        Self {
            save_weights: true,
            save_weights_folder: PathBuf::from("saved_weights"),
            save_best_weights: "val_loss".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiscConfig {
    pub show_summary: bool,
    pub plot_curves: bool,
    pub show_min_max_plot: bool,
    pub plot_conf: bool,
}

impl Default for MiscConfig {
    fn default() -> Self {
        Self {
            show_summary: true,
            plot_curves: true,
            show_min_max_plot: true,
            plot_conf: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub paths: PathsConfig,
    pub model: ModelConfig,
    pub training: TrainingConfig,
    pub evaluation: EvaluationConfig,
    pub saving: SavingConfig,
    pub misc: MiscConfig,
}

/// One failed check, addressed by its dotted key (`model.dropout_rate`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }

    pub fn mentions(&self, field: &str) -> bool {
        self.violations.iter().any(|v| v.field == field)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  {}: {}", v.field, v.message)?;
        }
        Ok(())
    }
}

fn known_keys(section: &str) -> &'static [&'static str] {
    match section {
        "paths" => &["train_val_data", "test_data_folder", "external_test_data_folder"],
        "model" => &[
            "image_size",
            "transfer_arch",
            "pre_trained",
            "before_dense",
            "dense_layers",
            "dense_activations",
            "initializer",
            "batch_norm",
            "regularization",
            "l2_strength",
            "dropout_rate",
            "unfreeze_block",
            "freeze_up_to",
        ],
        "training" => &[
            "epochs",
            "batch_size",
            "learning_rate",
            "optimizer_name",
            "add_optimizer_params",
            "class_weights",
            "metrics",
            "augmentation",
            "custom_augmentation",
            "callback",
            "early_stop",
            "warm_pretrain_dense",
            "warm_pretrain_epochs",
        ],
        "evaluation" => &["auto_mode"],
        "saving" => &["save_weights", "save_weights_folder", "save_best_weights"],
        "misc" => &["show_summary", "plot_curves", "show_min_max_plot", "plot_conf"],
        _ => &[],
    }
}

const HOOK_KEYS: [&str; 2] = ["custom_augmentation", "callback"];

impl ExperimentConfig {
    /// Builds a fully populated configuration from a partial nested map.
    ///
    /// The input is not modified. Hook-valued keys (`training.callback`,
    /// `training.custom_augmentation`) cannot be expressed in a document and
    /// are rejected here; attach hooks through the library API instead.
    pub fn apply_defaults(partial: &Value) -> Result<Self> {
        let root = match partial {
            Value::Null => return Ok(Self::default()),
            Value::Object(map) => map,
            _ => {
                return Err(Error::Config {
                    section: "<root>".into(),
                    key: "<root>".into(),
                    message: "expected a map of sections".into(),
                })
            }
        };

        let mut cfg = ExperimentConfig::default();
        for (section, body) in root {
            if section == HOOKS_RECORD {
                continue;
            }
            if !SECTIONS.contains(&section.as_str()) {
                return Err(Error::Config {
                    section: section.clone(),
                    key: section.clone(),
                    message: format!("unknown section; expected one of {SECTIONS:?}"),
                });
            }
            let entries = body.as_object().ok_or_else(|| Error::Config {
                section: section.clone(),
                key: section.clone(),
                message: "section must be a map".into(),
            })?;
            let known = known_keys(section);
            for (key, value) in entries {
                if !known.contains(&key.as_str()) {
                    return Err(Error::Config {
                        section: section.clone(),
                        key: key.clone(),
                        message: "unknown key".into(),
                    });
                }
                if section == "training" && HOOK_KEYS.contains(&key.as_str()) {
                    return Err(Error::Config {
                        section: section.clone(),
                        key: key.clone(),
                        message: "hooks can only be attached through the library API".into(),
                    });
                }
                apply_entry(&mut cfg, section, key, value)?;
            }
        }
        Ok(cfg)
    }

    /// Reads a TOML (`.toml`) or JSON (any other extension) config document.
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::apply_defaults(&read_document(path)?)
    }

    /// Checks ranges and cross-field rules, returning every violation found.
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();

        if self.paths.train_val_data.as_os_str().is_empty() {
            r.push("paths.train_val_data", "a train/val root directory is required");
        }
        if self.paths.test_data_folder.as_os_str().is_empty() {
            r.push("paths.test_data_folder", "a test directory is required");
        }

        let m = &self.model;
        if let Some((h, w)) = m.image_size {
            if h == 0 || w == 0 {
                r.push("model.image_size", "height and width must be positive");
            }
        }
        if !backbone::list_backbones().contains(&m.transfer_arch) {
            r.push(
                "model.transfer_arch",
                format!("unknown backbone; registered: {:?}", backbone::list_backbones()),
            );
        }
        if !backbone::WEIGHT_SOURCES.contains(&m.pre_trained.as_str()) {
            r.push(
                "model.pre_trained",
                format!("unknown weight source; expected one of {:?}", backbone::WEIGHT_SOURCES),
            );
        }
        if m.dense_layers.contains(&0) {
            r.push("model.dense_layers", "every dense width must be at least 1");
        }
        if Activation::from_name(&m.dense_activations).is_none() {
            r.push("model.dense_activations", "unknown activation");
        }
        if Initializer::from_name(&m.initializer).is_none() {
            r.push("model.initializer", "unknown initializer");
        }
        if !(m.l2_strength.is_finite() && m.l2_strength >= 0.0) {
            r.push("model.l2_strength", "must be a finite value >= 0");
        }
        if !(m.dropout_rate >= 0.0 && m.dropout_rate < 1.0) {
            r.push("model.dropout_rate", "must lie in the range [0,1)");
        }
        for block in &m.unfreeze_block {
            if !is_block_name(block) {
                r.push(
                    "model.unfreeze_block",
                    format!("`{block}` does not follow the cblock<N> naming"),
                );
            }
        }

        let t = &self.training;
        if t.epochs < 1 {
            r.push("training.epochs", "must be at least 1");
        }
        if t.batch_size < 1 {
            r.push("training.batch_size", "must be at least 1");
        }
        if !(t.learning_rate.is_finite() && t.learning_rate > 0.0) {
            r.push("training.learning_rate", "must be a finite value > 0");
        }
        if !optimizer::OPTIMIZERS.contains(&t.optimizer_name.as_str()) {
            r.push(
                "training.optimizer_name",
                format!("unknown optimizer; expected one of {:?}", optimizer::OPTIMIZERS),
            );
        }
        if t.metrics.is_empty() {
            r.push("training.metrics", "at least one metric is required");
        }
        for name in &t.metrics {
            if !metrics::METRICS.contains(&name.as_str()) {
                r.push(
                    "training.metrics",
                    format!("unknown metric `{name}`; expected one of {:?}", metrics::METRICS),
                );
            }
        }
        if t.augmentation == AugmentationMode::Custom && t.custom_augmentation.is_empty() {
            r.push(
                "training.custom_augmentation",
                "augmentation `custom` requires at least one transform",
            );
        }
        if !(t.early_stop >= 0.0 && t.early_stop <= 1.0) {
            r.push("training.early_stop", "must lie in the range [0,1]");
        }

        let monitored = &self.saving.save_best_weights;
        if !metrics::is_monitorable(monitored, &t.metrics) {
            r.push(
                "saving.save_best_weights",
                format!("`{monitored}` is neither a loss nor a configured metric"),
            );
        }
        if self.saving.save_weights && self.saving.save_weights_folder.as_os_str().is_empty() {
            r.push("saving.save_weights_folder", "required when save_weights is true");
        }
        r
    }

    /// Plain serializable form of the configuration.
    ///
    /// Hooks are recorded under a top-level `hooks` entry by count and name.
    pub fn snapshot(&self) -> Value {
        let mut value = serde_json::to_value(self).expect("config is always serializable");
        let hooks = serde_json::json!({
            "callback_count": self.training.callback.len(),
            "callback_names": self.training.callback.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "custom_augmentation_count": self.training.custom_augmentation.len(),
            "custom_augmentation_names":
                self.training.custom_augmentation.iter().map(|t| t.name().to_string()).collect::<Vec<_>>(),
        });
        value
            .as_object_mut()
            .expect("config serializes to a map")
            .insert(HOOKS_RECORD.into(), hooks);
        value
    }
}

fn apply_entry(cfg: &mut ExperimentConfig, section: &str, key: &str, value: &Value) -> Result<()> {
    // Round-trip the section through a map so serde handles field typing.
    let mut current = match section {
        "paths" => serde_json::to_value(&cfg.paths),
        "model" => serde_json::to_value(&cfg.model),
        "training" => serde_json::to_value(&cfg.training),
        "evaluation" => serde_json::to_value(&cfg.evaluation),
        "saving" => serde_json::to_value(&cfg.saving),
        "misc" => serde_json::to_value(&cfg.misc),
        _ => unreachable!("section checked by caller"),
    }?;
    current
        .as_object_mut()
        .expect("sections serialize to maps")
        .insert(key.to_string(), value.clone());

    let err = |e: serde_json::Error| Error::Config {
        section: section.to_string(),
        key: key.to_string(),
        message: e.to_string(),
    };
    match section {
        "paths" => cfg.paths = serde_json::from_value(current).map_err(err)?,
        "model" => cfg.model = serde_json::from_value(current).map_err(err)?,
        "training" => {
            let hooks = (
                std::mem::take(&mut cfg.training.custom_augmentation),
                std::mem::take(&mut cfg.training.callback),
            );
            cfg.training = serde_json::from_value(current).map_err(err)?;
            cfg.training.custom_augmentation = hooks.0;
            cfg.training.callback = hooks.1;
        }
        "evaluation" => cfg.evaluation = serde_json::from_value(current).map_err(err)?,
        "saving" => cfg.saving = serde_json::from_value(current).map_err(err)?,
        "misc" => cfg.misc = serde_json::from_value(current).map_err(err)?,
        _ => unreachable!(),
    }
    Ok(())
}

fn is_block_name(name: &str) -> bool {
    name.strip_prefix("cblock")
        .map(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()))
        .unwrap_or(false)
}

pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_toml = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("toml"))
        .unwrap_or(false);
    if is_toml {
        let doc: toml::Value = toml::from_str(&text).map_err(|e| Error::Config {
            section: "<file>".into(),
            key: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(serde_json::to_value(doc)?)
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

/// Parses a `section.key=value` override. The value is read as a TOML literal
/// and falls back to a bare string (`model.transfer_arch=VGG19`).
pub fn parse_override(spec: &str) -> Result<(String, String, Value)> {
    let bad = |msg: &str| Error::InvalidArgument(format!("override `{spec}`: {msg}"));
    let (path, raw) = spec.split_once('=').ok_or_else(|| bad("expected KEY=VALUE"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| bad("key must be dotted as section.key"))?;
    if section.is_empty() || key.is_empty() || key.contains('.') {
        return Err(bad("key must be dotted as section.key"));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut table) => serde_json::to_value(table.remove("v").expect("parsed key"))?,
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((section.to_string(), key.to_string(), value))
}

/// Merges overrides into a partial document; later entries win.
pub fn merge_overrides(document: &mut Value, overrides: &[(String, String, Value)]) {
    if !document.is_object() {
        *document = Value::Object(Map::new());
    }
    let root = document.as_object_mut().expect("object");
    for (section, key, value) in overrides {
        let entry = root
            .entry(section.clone())
            .or_insert_with(|| Value::Object(Map::new()));
        if !entry.is_object() {
            *entry = Value::Object(Map::new());
        }
        entry
            .as_object_mut()
            .expect("object")
            .insert(key.clone(), value.clone());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn with_paths(extra: Value) -> Value {
        let mut v = json!({"paths": {"train_val_data": "data/tv", "test_data_folder": "data/test"}});
        if let Value::Object(map) = extra {
            for (k, val) in map {
                v.as_object_mut().unwrap().insert(k, val);
            }
        }
        v
    }

    #[test]
    fn documented_defaults() {
        let cfg = ExperimentConfig::apply_defaults(&with_paths(json!({}))).unwrap();
        assert_eq!(cfg.model.initializer, "he_normal");
        assert_eq!(cfg.model.dense_activations, "elu");
        assert_eq!(cfg.model.pre_trained, "imagenet");
        assert_eq!(cfg.model.before_dense, Bridge::Flatten);
        assert_eq!(cfg.training.learning_rate, 2e-5);
        assert!(cfg.training.class_weights);
        assert_eq!(cfg.training.metrics, vec!["accuracy"]);
        assert_eq!(cfg.training.augmentation, AugmentationMode::Basic);
        assert_eq!(cfg.training.early_stop, 0.0);
        assert!(cfg.evaluation.auto_mode);
        assert_eq!(cfg.saving.save_best_weights, "val_loss");
        assert!(cfg.misc.show_summary && cfg.misc.plot_curves);
        assert!(cfg.misc.show_min_max_plot && cfg.misc.plot_conf);
        assert!(cfg.validate().is_empty(), "{}", cfg.validate());
    }

    #[test]
    fn dense_layers_preserved() {
        let cfg =
            ExperimentConfig::apply_defaults(&json!({"model": {"dense_layers": [144, 89, 55]}}))
                .unwrap();
        assert_eq!(cfg.model.dense_layers, vec![144, 89, 55]);
        assert_eq!(cfg.training, TrainingConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::apply_defaults(&json!({"training": {"epochz": 5}})).unwrap_err();
        match err {
            Error::Config { section, key, .. } => {
                assert_eq!(section, "training");
                assert_eq!(key, "epochz");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_section_rejected() {
        let err = ExperimentConfig::apply_defaults(&json!({"optim": {}})).unwrap_err();
        assert!(matches!(err, Error::Config { ref section, .. } if section == "optim"));
    }

    #[test]
    fn wrong_type_is_config_error() {
        let err =
            ExperimentConfig::apply_defaults(&json!({"training": {"epochs": "many"}})).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "epochs"));
    }

    #[test]
    fn input_not_mutated() {
        let input = with_paths(json!({"model": {"dense_layers": [8]}}));
        let before = input.clone();
        let _ = ExperimentConfig::apply_defaults(&input).unwrap();
        assert_eq!(input, before);
    }

    #[test]
    fn dropout_out_of_range() {
        let mut cfg = ExperimentConfig::apply_defaults(&with_paths(json!({}))).unwrap();
        cfg.model.dropout_rate = 1.5;
        let report = cfg.validate();
        assert_eq!(report.len(), 1);
        assert!(report.violations[0].message.contains("[0,1)"));
    }

    #[test]
    fn custom_augmentation_needs_hooks() {
        let cfg = ExperimentConfig::apply_defaults(&with_paths(
            json!({"training": {"augmentation": "custom"}}),
        ))
        .unwrap();
        assert!(cfg.validate().mentions("training.custom_augmentation"));
    }

    #[test]
    fn validation_collects_all_violations() {
        let mut cfg = ExperimentConfig::default();
        cfg.model.dropout_rate = -0.1;
        cfg.training.epochs = 0;
        cfg.model.l2_strength = -1.0;
        let report = cfg.validate();
        for field in [
            "paths.train_val_data",
            "paths.test_data_folder",
            "model.dropout_rate",
            "training.epochs",
            "model.l2_strength",
        ] {
            assert!(report.mentions(field), "missing {field}: {report}");
        }
    }

    #[test]
    fn monitored_metric_must_exist() {
        let mut cfg = ExperimentConfig::apply_defaults(&with_paths(json!({}))).unwrap();
        cfg.saving.save_best_weights = "val_recall".into();
        assert!(cfg.validate().mentions("saving.save_best_weights"));
        cfg.training.metrics.push("recall".into());
        assert!(cfg.validate().is_empty());
    }

    #[test]
    fn snapshot_contains_defaults_and_hook_counts() {
        let mut cfg = ExperimentConfig::default();
        let snap = cfg.snapshot();
        assert_eq!(snap["model"]["initializer"], "he_normal");
        assert_eq!(snap["hooks"]["callback_count"], 0);

        cfg.training.callback = vec![
            CallbackHandle::from_fn("a", |_, _, _| {}),
            CallbackHandle::from_fn("b", |_, _, _| {}),
        ];
        let snap = cfg.snapshot();
        assert_eq!(snap["hooks"]["callback_count"], 2);
        assert_eq!(snap["hooks"]["callback_names"], json!(["a", "b"]));
    }

    #[test]
    fn hook_keys_rejected_from_documents() {
        let err =
            ExperimentConfig::apply_defaults(&json!({"training": {"callback": []}})).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "callback"));
    }

    #[test]
    fn low_level_listing_parses() {
        let doc = json!({
            "paths": {"train_val_data": "tv", "test_data_folder": "t", "external_test_data_folder": "ext"},
            "model": {
                "image_size": [224, 224], "transfer_arch": "VGG19", "pre_trained": "imagenet",
                "before_dense": "Flatten", "dense_layers": [610, 377, 233, 144, 89, 55],
                "dense_activations": "elu", "initializer": "he_normal", "batch_norm": true,
                "regularization": "Dropout+L2", "l2_strength": 0.001, "dropout_rate": 0.35,
                "unfreeze_block": ["cblock1", "cblock2", "cblock5"], "freeze_up_to": "flatten"
            },
            "training": {
                "epochs": 9, "batch_size": 32, "learning_rate": 2e-5, "optimizer_name": "Adam",
                "add_optimizer_params": {"clipnorm": 0.8}, "class_weights": true,
                "metrics": ["accuracy", "recall", "precision"], "augmentation": "basic",
                "early_stop": 0.20, "warm_pretrain_dense": true, "warm_pretrain_epochs": 9
            },
            "evaluation": {"auto_mode": true},
            "saving": {"save_weights": true, "save_weights_folder": "w", "save_best_weights": "val_loss"},
            "misc": {"show_summary": true, "plot_curves": true, "show_min_max_plot": true, "plot_conf": true}
        });
        let cfg = ExperimentConfig::apply_defaults(&doc).unwrap();
        assert_eq!(cfg.model.regularization, Regularization::DropoutL2);
        assert_eq!(cfg.model.image_size, Some((224, 224)));
        assert_eq!(cfg.training.add_optimizer_params["clipnorm"], json!(0.8));
        assert!(cfg.validate().is_empty(), "{}", cfg.validate());
    }

    #[test]
    fn override_parsing() {
        assert_eq!(
            parse_override("training.epochs=5").unwrap(),
            ("training".into(), "epochs".into(), json!(5))
        );
        assert_eq!(
            parse_override("model.transfer_arch=VGG19").unwrap().2,
            json!("VGG19")
        );
        assert_eq!(
            parse_override("model.dense_layers=[16, 8]").unwrap().2,
            json!([16, 8])
        );
        assert!(parse_override("epochs=5").is_err());
        assert!(parse_override("training.epochs").is_err());
    }
}
