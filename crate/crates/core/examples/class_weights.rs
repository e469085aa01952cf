//! Trains on an imbalanced dataset with and without class weighting and
//! compares per-class recall on the test split.
//!
//! Run with: cargo run --example class_weights

use serde_json::json;
use tlvision::data::compute_class_weights;
use tlvision::eval::confusion;
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::train::evaluate_split;
use tlvision::{data::Split, Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;
    // keep only 3 of the 20 "red" training images
    let red = data.train_val.join("train").join("red");
    let mut files: Vec<_> = std::fs::read_dir(&red)
        .expect("red dir")
        .map(|e| e.expect("entry").path())
        .collect();
    files.sort();
    for f in &files[3..] {
        std::fs::remove_file(f).expect("remove");
    }

    for weighted in [false, true] {
        let config = ExperimentConfig::apply_defaults(&json!({
            "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
            "model": { "transfer_arch": "TinyNet", "pre_trained": "none", "dense_layers": [16] },
            "training": {
                "epochs": 4,
                "batch_size": 8,
                "learning_rate": 1e-3,
                "augmentation": "none",
                "class_weights": weighted,
                "metrics": ["accuracy", "recall"],
            },
            "saving": { "save_weights_folder": root.path().join(format!("w{weighted}")) },
            "misc": { "plot_curves": false, "show_min_max_plot": false, "plot_conf": false },
        }))?;
        let run = Experiment::new(config, 3).run()?;
        if weighted {
            println!("weights {:?}", compute_class_weights(&run.data.train_counts())?);
        }
        let test = evaluate_split(&run.model, &run.data, Split::Test, &["recall".into()])?;
        let cm = confusion(&test.y_true, &test.y_pred, run.data.task().num_classes)?;
        let per_class: Vec<String> = run
            .data
            .task()
            .class_names()
            .iter()
            .enumerate()
            .map(|(i, name)| format!("{name} {}/{}", cm.get(i, i), cm.row_sums()[i]))
            .collect();
        println!(
            "class_weights={weighted}: macro recall {:.3}  {}",
            test.metrics["recall"],
            per_class.join(", ")
        );
    }
    Ok(())
}
