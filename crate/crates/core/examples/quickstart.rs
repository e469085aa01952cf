//! Full run on a generated 3-class dataset: train, evaluate, plot, export.
//!
//! Run with: cargo run --example quickstart

use std::time::Instant;

use serde_json::json;
use tlvision::export::{export_all, ExportOptions};
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::train::Phase;
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;

    let config = ExperimentConfig::apply_defaults(&json!({
        "paths": {
            "train_val_data": data.train_val,
            "test_data_folder": data.test,
        },
        "model": {
            "transfer_arch": "TinyNet",
            "pre_trained": "none",
            "dense_layers": [16],
            "unfreeze_block": ["cblock2"],
        },
        "training": {
            "epochs": 5,
            "batch_size": 8,
            "learning_rate": 1e-3,
            "augmentation": "none",
            "metrics": ["accuracy", "recall", "precision"],
        },
        "saving": { "save_weights_folder": root.path().join("weights") },
    }))?;

    let start = Instant::now();
    let run = Experiment::new(config, 7)
        .with_work_dir(root.path().join("work"))
        .run()?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let history = &run.results.history;
    for (epoch, (acc, val)) in history
        .series(Phase::Main, "accuracy")
        .iter()
        .zip(history.series(Phase::Main, "val_loss"))
        .enumerate()
    {
        println!("epoch {epoch}: accuracy {acc:.3}  val_loss {val:.4}");
    }
    if let Some(best) = run.results.best {
        println!("best val_loss {:.4} at epoch {}", best.value, best.epoch);
    }
    for (split, metrics) in &run.results.report.metrics {
        println!("{split}: {metrics:?}");
        println!("confusion: {:?}", run.results.report.confusion[split].counts);
    }

    let dir = export_all(
        &run.results,
        Some(&run.model),
        &root.path().join("runs"),
        ExportOptions::default(),
    )?;
    println!("exported to {}", dir.display());
    for entry in std::fs::read_dir(&dir).expect("export dir") {
        println!("  {}", entry.expect("entry").file_name().to_string_lossy());
    }
    Ok(())
}
