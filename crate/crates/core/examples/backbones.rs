//! Lists the registered backbones with their blocks, parameter counts and
//! output feature shapes, then installs a weight file into a local cache and
//! resolves the `imagenet` source through it.
//!
//! Run with: cargo run --example backbones

use std::collections::HashMap;

use serde_json::json;
use tlvision::backbone::{get_backbone_with_cache, list_backbones, load_weights, WeightCache};
use tlvision::synthetic::{write_dataset, SyntheticSpec};
use tlvision::{Experiment, ExperimentConfig};

fn main() -> tlvision::Result<()> {
    let root = tempfile::tempdir().expect("temp dir");
    let cache = WeightCache::new(root.path().join("cache"));

    for name in list_backbones() {
        let handle = get_backbone_with_cache(&name, "none", &cache)?;
        let params: usize = handle.layer_params().iter().map(|(_, n)| n).sum();
        println!(
            "{name:8} input {:?}  layers {:2}  params {params:>10}  features {:?}",
            handle.input_size,
            handle.layers.len(),
            handle.feature_shape(handle.input_size)?,
        );
        println!("         blocks {:?}", handle.block_names());
    }

    // pretrained weights are never downloaded; they come from the cache
    let handle = get_backbone_with_cache("TinyNet", "imagenet", &cache)?;
    if let Err(e) = load_weights(&handle) {
        println!("\nbefore install: {e}");
    }
    // a freshly initialized TinyNet stands in for a real pretrained file
    let data = write_dataset(&root.path().join("data"), &SyntheticSpec::default())?;
    let config = ExperimentConfig::apply_defaults(&json!({
        "paths": { "train_val_data": data.train_val, "test_data_folder": data.test },
        "model": { "transfer_arch": "TinyNet", "pre_trained": "none" },
    }))?;
    let model = Experiment::new(config, 7).prepare()?.model;
    let tensors: HashMap<_, _> = model
        .weights()?
        .into_iter()
        .filter(|(k, _)| model.backbone().has_layer(k.rsplit_once('.').map_or(k, |(l, _)| l)))
        .collect();
    let path = cache.install("TinyNet", "imagenet", &tensors)?;
    println!("installed {} tensors at {}", tensors.len(), path.display());
    let cached = get_backbone_with_cache("TinyNet", "imagenet", &cache)?;
    let loaded = load_weights(&cached)?.map_or(0, |t| t.len());
    println!("after install: {loaded} tensors load from {:?}", cached.weights);
    Ok(())
}
