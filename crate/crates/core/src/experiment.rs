//! End-to-end run: data, model, warm phase, training, evaluation, plots and
//! the results bundle.

use std::path::{Path, PathBuf};

use log::info;

use crate::backbone::{get_backbone_with_cache, Preprocess, WeightCache};
use crate::config::ExperimentConfig;
use crate::data::{build_bundle, discover_splits, infer_task, resolve_augmentation, DatasetBundle};
use crate::error::{Error, Result};
use crate::eval::{
    auto_evaluate, build_results, render_confusion, render_curves, render_minmax, ArtifactPaths,
    ResultsBundle,
};
use crate::nn::{assemble, build_head, BuiltModel, FreezePolicy, HeadSpec};
use crate::train::{train, warm_pretrain, CheckpointStore, TrainSettings, TrainingHistory};

pub const PLOTS_SUBDIR: &str = "plots";

/// Discovers the configured splits and builds the dataset bundle.
pub fn load_data(
    config: &ExperimentConfig,
    seed: u64,
    image_size: (u32, u32),
    preprocess: Preprocess,
) -> Result<DatasetBundle> {
    let layout = discover_splits(
        &config.paths.train_val_data,
        &config.paths.test_data_folder,
        config.paths.external_test_data_folder.as_deref(),
    )?;
    let task = infer_task(&layout)?;
    let plan = resolve_augmentation(
        config.training.augmentation,
        &config.training.custom_augmentation,
    )?;
    build_bundle(
        &layout,
        &task,
        image_size,
        preprocess,
        plan,
        config.training.batch_size as usize,
        seed,
    )
}

/// Model and data built from a validated configuration, before training.
pub struct Prepared {
    pub model: BuiltModel,
    pub data: DatasetBundle,
}

/// Outputs of [`Experiment::run`]. The model holds the evaluated weights.
pub struct RunOutput {
    pub model: BuiltModel,
    pub data: DatasetBundle,
    pub store: CheckpointStore,
    pub results: ResultsBundle,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    config: ExperimentConfig,
    seed: u64,
    work_dir: PathBuf,
    cache: WeightCache,
}

impl Experiment {
    /// Plots are written under `./plots`; relative weight folders resolve
    /// against the process working directory.
    pub fn new(config: ExperimentConfig, seed: u64) -> Self {
        Experiment {
            config,
            seed,
            work_dir: PathBuf::from("."),
            cache: WeightCache::from_env(),
        }
    }

    /// Directory receiving plots.
    pub fn with_work_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.work_dir = dir.into();
        self
    }

    pub fn with_weight_cache(mut self, cache: WeightCache) -> Self {
        self.cache = cache;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Validates the configuration, then loads data and assembles the model
    /// with its configured freeze policy.
    pub fn prepare(&self) -> Result<Prepared> {
        let report = self.config.validate();
        if !report.is_empty() {
            return Err(Error::InvalidConfig(report));
        }
        let cfg = &self.config;
        let backbone =
            get_backbone_with_cache(&cfg.model.transfer_arch, &cfg.model.pre_trained, &self.cache)?;
        let image_size = cfg.model.image_size.unwrap_or(backbone.input_size);
        let data = load_data(cfg, self.seed, image_size, backbone.preprocess)?;
        let task = data.task().clone();
        let head = build_head(&task, &HeadSpec::from_config(&cfg.model)?)?;
        let mut model = assemble(
            &backbone,
            &head,
            cfg.model.before_dense,
            &task,
            image_size,
            self.seed,
        )?;
        model.apply_freeze_policy(&FreezePolicy {
            unfreeze_blocks: cfg.model.unfreeze_block.clone(),
            freeze_up_to: cfg.model.freeze_up_to.clone(),
        })?;
        if cfg.misc.show_summary {
            info!("\n{}", model.summary());
        }
        Ok(Prepared { model, data })
    }

    pub fn checkpoint_store(&self) -> Result<CheckpointStore> {
        let saving = &self.config.saving;
        if saving.save_weights {
            CheckpointStore::new(&saving.save_weights_folder, &saving.save_best_weights)
        } else {
            Ok(CheckpointStore::in_memory(&saving.save_best_weights))
        }
    }

    /// Runs the whole pipeline.
    pub fn run(&self) -> Result<RunOutput> {
        let Prepared { mut model, data } = self.prepare()?;
        let cfg = &self.config;
        let settings = TrainSettings::from_config(cfg);

        let mut history = TrainingHistory::default();
        if cfg.training.warm_pretrain_dense {
            let optimizer = settings.optimizer()?;
            history.extend(warm_pretrain(
                &mut model,
                &data,
                cfg.training.warm_pretrain_epochs as usize,
                &optimizer,
                &settings,
            )?);
        }
        let mut store = self.checkpoint_store()?;
        history.extend(train(
            &mut model,
            &data,
            &settings,
            &cfg.training.callback,
            &mut store,
        )?);

        let report = auto_evaluate(
            &model,
            &store,
            &data,
            &cfg.training.metrics,
            cfg.evaluation.auto_mode,
        )?;

        let mut artifacts = ArtifactPaths::default();
        artifacts.weights.extend(store.best_path().map(Path::to_path_buf));
        let plots = self.work_dir.join(PLOTS_SUBDIR);
        if cfg.misc.plot_curves {
            artifacts.plots.extend(render_curves(&history, &plots)?);
        }
        if cfg.misc.show_min_max_plot {
            artifacts.plots.push(render_minmax(&history, &plots)?);
        }
        if cfg.misc.plot_conf {
            let names = data.task().class_names();
            for (split, matrix) in &report.confusion {
                artifacts
                    .plots
                    .push(render_confusion(matrix, &names, split, &plots)?);
            }
        }

        let results = build_results(
            cfg,
            self.seed,
            model.spec(),
            history,
            report,
            &store,
            artifacts,
        )?;
        Ok(RunOutput {
            model,
            data,
            store,
            results,
        })
    }
}
