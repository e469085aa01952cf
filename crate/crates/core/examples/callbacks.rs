//! Early stopping, a step learning-rate schedule, a logging callback and a
//! custom augmentation, all attached through the library API.
//!
//! Run with: cargo run --example callbacks

use std::sync::{Arc, Mutex};

use serde_json::json;
use tlvision::config::AugmentationMode;
use tlvision::data::{Image, ImageTransform};
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::train::{compute_patience, step_schedule, CallbackHandle, Phase};
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;
    let mut config = ExperimentConfig::apply_defaults(&json!({
        "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
        "model": { "transfer_arch": "TinyNet", "pre_trained": "none", "dense_layers": [16] },
        "training": {
            "epochs": 20,
            "batch_size": 8,
            "learning_rate": 1e-3,
            "early_stop": 0.15,
            "metrics": ["accuracy"],
        },
        "saving": {
            "save_weights_folder": root.path().join("weights"),
            "save_best_weights": "val_accuracy",
        },
        "misc": { "plot_curves": false, "show_min_max_plot": false, "plot_conf": false },
    }))?;
    println!("patience {} epochs", compute_patience(config.training.early_stop, 20));

    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    config.training.callback = vec![
        step_schedule(vec![3, 6], 0.5),
        CallbackHandle::from_fn("log", move |epoch, record, control| {
            log.lock().unwrap().push((epoch, control.learning_rate, record["val_accuracy"]));
        }),
    ];
    config.training.augmentation = AugmentationMode::Custom;
    config.training.custom_augmentation = vec![ImageTransform::new("darken", |img: &Image| {
        Image::new(img.height, img.width, img.data.iter().map(|v| v * 0.9).collect())
    })];

    let run = Experiment::new(config, 21).run()?;
    for (epoch, lr, acc) in seen.lock().unwrap().iter() {
        println!("epoch {epoch:2}  lr {lr:.2e}  val_accuracy {acc:.3}");
    }
    println!(
        "ran {} of 20 epochs; best {:?}",
        run.results.history.epochs(Phase::Main),
        run.results.best
    );
    println!("hooks recorded as {}", run.results.config["hooks"]);
    Ok(())
}
