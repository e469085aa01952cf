//! Two-phase training: the head is first trained alone on a frozen backbone,
//! then the configured freeze policy applies for the main phase.
//!
//! Run with: cargo run --example warm_start

use serde_json::json;
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::train::Phase;
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;
    let config = ExperimentConfig::apply_defaults(&json!({
        "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
        "model": {
            "transfer_arch": "TinyNet",
            "pre_trained": "none",
            "dense_layers": [16],
            "unfreeze_block": ["cblock1", "cblock2"],
        },
        "training": {
            "epochs": 3,
            "batch_size": 8,
            "learning_rate": 5e-4,
            "augmentation": "basic",
            "warm_pretrain_dense": true,
            "warm_pretrain_epochs": 2,
            "optimizer_name": "RMSprop",
            "add_optimizer_params": { "clipnorm": 1.0 },
        },
        "saving": { "save_weights_folder": root.path().join("weights") },
        "misc": { "plot_curves": true, "show_min_max_plot": true, "plot_conf": true },
    }))?;
    let run = Experiment::new(config, 4)
        .with_work_dir(root.path().join("work"))
        .run()?;
    let history = &run.results.history;
    for phase in [Phase::Warm, Phase::Main] {
        println!("{}: loss {:?}", phase.name(), history.series(phase, "loss"));
    }
    println!("trainable after run: {:?}", run.model.trainable_mask());
    for plot in &run.results.artifacts.plots {
        println!("plot {}", plot.display());
    }
    Ok(())
}
