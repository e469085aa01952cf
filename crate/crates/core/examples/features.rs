//! Pulls activations out of an intermediate layer for every split, for use in
//! an external classifier or embedding plot.
//!
//! Run with: cargo run --example features

use serde_json::json;
use tlvision::data::Split;
use tlvision::inference::model_feature_extract;
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;
    let config = ExperimentConfig::apply_defaults(&json!({
        "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
        "model": { "transfer_arch": "TinyNet", "pre_trained": "none", "dense_layers": [24, 8] },
        "training": { "epochs": 3, "batch_size": 8, "learning_rate": 1e-3, "augmentation": "none" },
        "saving": { "save_weights_folder": root.path().join("weights") },
        "misc": { "plot_curves": false, "show_min_max_plot": false, "plot_conf": false },
    }))?;
    let run = Experiment::new(config, 5).run()?;

    for (i, name) in run.model.layer_names().iter().enumerate() {
        println!("{i:2} {name}");
    }

    let dense = model_feature_extract(&run.model, &run.data, None, Some("dense_2"))?;
    println!("\n{} (index {}) width {}", dense.layer_name, dense.layer_index, dense.width);
    for split in [Split::Train, Split::Val, Split::Test] {
        let f = dense.get(split).expect("split present");
        println!("  {:5} {:?}  first row {:?}", split.name(), f.features.dim(), f.features.row(0).to_vec());
    }

    // conv maps are flattened
    let pooled = model_feature_extract(&run.model, &run.data, Some(run.model.backbone_len() - 1), None)?;
    println!("\n{} width {}", pooled.layer_name, pooled.width);

    let files = dense.write_csv(&root.path().join("features"), &run.data.task().class_names())?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
