//! Compares which layers train under different freeze policies. Nothing is
//! trained here; the model is only assembled.
//!
//! Run with: cargo run --example freeze_policies

use serde_json::json;
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;

    let policies = [
        ("frozen backbone", json!({})),
        ("unfreeze cblock2", json!({ "unfreeze_block": ["cblock2"] })),
        ("freeze up to block1_pool", json!({ "freeze_up_to": "block1_pool" })),
        (
            "both",
            json!({ "unfreeze_block": ["cblock1"], "freeze_up_to": "block2_conv1" }),
        ),
    ];
    for (label, policy) in policies {
        let mut model = json!({ "transfer_arch": "TinyNet", "pre_trained": "none", "dense_layers": [16] });
        for (k, v) in policy.as_object().expect("map") {
            model[k] = v.clone();
        }
        let config = ExperimentConfig::apply_defaults(&json!({
            "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
            "model": model,
        }))?;
        let built = Experiment::new(config, 1).prepare()?.model;
        let (trainable, frozen) = built.parameter_counts();
        let on: Vec<&String> = built
            .trainable_mask()
            .iter()
            .filter(|(_, &t)| t)
            .map(|(name, _)| name)
            .collect();
        println!("{label}\n  trainable {trainable} frozen {frozen}\n  {on:?}");
    }

    let bad = ExperimentConfig::apply_defaults(&json!({
        "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
        "model": { "transfer_arch": "TinyNet", "pre_trained": "none", "unfreeze_block": ["cblock9"] },
    }))?;
    match Experiment::new(bad, 1).prepare() {
        Ok(_) => println!("unexpected success"),
        Err(e) => println!("\n{e}"),
    }
    Ok(())
}
