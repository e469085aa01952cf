#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

use candle_core::Tensor;
use serde_json::{json, Value};
use tlvision::synthetic::{write_dataset, SyntheticPaths, SyntheticSpec};
use tlvision::ExperimentConfig;

pub const SEED: u64 = 7;

pub fn dataset(root: &Path, spec: &SyntheticSpec) -> SyntheticPaths {
    write_dataset(root, spec).expect("synthetic dataset")
}

/// TinyNet on the generated data with a `[16]` head; `extra` is merged
/// section by section over the base document.
pub fn config_document(data: &SyntheticPaths, work: &Path, extra: Value) -> Value {
    let mut doc = json!({
        "paths": {
            "train_val_data": data.train_val,
            "test_data_folder": data.test,
        },
        "model": {
            "transfer_arch": "TinyNet",
            "pre_trained": "none",
            "dense_layers": [16],
        },
        "training": {
            "epochs": 5,
            "batch_size": 8,
            "learning_rate": 1e-3,
            "augmentation": "none",
            "metrics": ["accuracy"],
        },
        "saving": { "save_weights_folder": work.join("weights") },
        "misc": {
            "show_summary": false,
            "plot_curves": false,
            "show_min_max_plot": false,
            "plot_conf": false,
        },
    });
    if let Some(ext) = &data.external {
        doc["paths"]["external_test_data_folder"] = json!(ext);
    }
    if let Value::Object(sections) = extra {
        for (section, body) in sections {
            if let Value::Object(entries) = body {
                for (k, v) in entries {
                    doc[&section][&k] = v;
                }
            }
        }
    }
    doc
}

pub fn config(data: &SyntheticPaths, work: &Path, extra: Value) -> ExperimentConfig {
    ExperimentConfig::apply_defaults(&config_document(data, work, extra)).expect("valid config")
}

pub fn snapshot(weights: &HashMap<String, Tensor>) -> HashMap<String, Vec<u32>> {
    weights
        .iter()
        .map(|(k, t)| {
            let bits = t
                .flatten_all()
                .unwrap()
                .to_vec1::<f32>()
                .unwrap()
                .into_iter()
                .map(f32::to_bits)
                .collect();
            (k.clone(), bits)
        })
        .collect()
}

/// Parameter name `<layer>.<kind>` to its layer name.
pub fn layer_of(param: &str) -> &str {
    param.rsplit_once('.').map(|(l, _)| l).unwrap_or(param)
}
