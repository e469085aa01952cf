//! Configuration the way the CLI sees it: a TOML file, `section.key=value`
//! overrides on top, validation with every violation reported at once, and
//! the JSON snapshot that ends up in results.json.
//!
//! Run with: cargo run --example config_file

use tlvision::cli::{load_config, ConfigArgs};
use tlvision::config::ExperimentConfig;
use tlvision::synthetic::{write_dataset, SyntheticSpec};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let data = write_dataset(root.path(), &SyntheticSpec::default())?;
    let path = root.path().join("experiment.toml");
    std::fs::write(
        &path,
        format!(
            r#"
[paths]
train_val_data = "{}"
test_data_folder = "{}"

[model]
transfer_arch = "TinyNet"
pre_trained = "none"
dense_layers = [32, 16]
regularization = "Dropout"
dropout_rate = 0.25

[training]
epochs = 4
optimizer_name = "SGD"
add_optimizer_params = {{ momentum = 0.9, nesterov = true }}
metrics = ["accuracy", "recall"]
"#,
            data.train_val.display(),
            data.test.display()
        ),
    )
    .expect("write config");

    let config = load_config(&ConfigArgs {
        config: Some(path.clone()),
        overrides: vec!["training.epochs=8".into(), "model.dense_layers=[64]".into()],
    })?;
    println!("epochs {} dense {:?} optimizer {}", config.training.epochs, config.model.dense_layers, config.training.optimizer_name);
    println!("untouched defaults: batch_size {} lr {}", config.training.batch_size, config.training.learning_rate);
    println!("{}", serde_json::to_string_pretty(&config.snapshot()).expect("json"));

    // several mistakes, one report
    let mut broken = config.clone();
    broken.training.epochs = 0;
    broken.model.dropout_rate = 1.5;
    broken.saving.save_best_weights = "val_f1".into();
    println!("\n{}", broken.validate());

    let unknown = ExperimentConfig::apply_defaults(&serde_json::json!({ "training": { "epoch": 3 } }));
    println!("\n{}", unknown.expect_err("misspelled key is rejected"));
    Ok(())
}
