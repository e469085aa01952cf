//! Trains briefly, exports the run, reloads it from disk and predicts a folder
//! of unlabeled images. The least certain images (lowest variance) come first.
//!
//! Run with: cargo run --example predict

use serde_json::json;
use tlvision::export::{export_all, load_run_model, ExportOptions};
use tlvision::inference::{model_predict, write_predictions_csv, SortBy};
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;
    let config = ExperimentConfig::apply_defaults(&json!({
        "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
        "model": { "transfer_arch": "TinyNet", "pre_trained": "none", "dense_layers": [16] },
        "training": { "epochs": 4, "batch_size": 8, "learning_rate": 1e-3, "augmentation": "none" },
        "saving": { "save_weights_folder": root.path().join("weights") },
        "misc": { "plot_curves": false, "show_min_max_plot": false, "plot_conf": false },
    }))?;
    let run = Experiment::new(config, 11).run()?;
    let run_dir = export_all(&run.results, Some(&run.model), &root.path().join("runs"), ExportOptions::default())?;

    // everything below only needs the exported directory
    let (results, model) = load_run_model(&run_dir)?;
    println!("classes {:?}", results.class_names());

    let unlabeled = root.path().join("inbox");
    std::fs::create_dir(&unlabeled).expect("inbox");
    for class in results.class_names() {
        for entry in std::fs::read_dir(data.test.join(&class)).expect("test dir").take(2) {
            let src = entry.expect("entry").path();
            let dst = unlabeled.join(format!("{class}_{}", src.file_name().unwrap().to_string_lossy()));
            std::fs::copy(&src, dst).expect("copy");
        }
    }
    std::fs::write(unlabeled.join("notes.png"), b"not an image").expect("write");

    let predictions = model_predict(&model, &unlabeled, SortBy::Variance)?;
    for r in &predictions.records {
        println!(
            "{:40} {:14} conf {:.3} var {:.4} {:?}",
            r.path.file_name().unwrap().to_string_lossy(),
            r.predicted_label,
            r.confidence,
            r.variance,
            r.probabilities.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>(),
        );
    }
    for (path, reason) in &predictions.skipped {
        println!("skipped {}: {reason}", path.display());
    }
    let csv = root.path().join("predictions.csv");
    write_predictions_csv(&predictions.records, &csv)?;
    println!("\n{}", std::fs::read_to_string(&csv).expect("csv").lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}
