//! `tlvision run | predict | extract | export`.
//!
//! Exit codes: 0 on success, 2 for usage errors, 1 for pipeline errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::config::{merge_overrides, parse_override, read_document, ExperimentConfig};
use crate::error::{Error, Result};
use crate::experiment::{load_data, Experiment};
use crate::export::{export_all, load_run_model, ExportOptions};
use crate::inference::{model_feature_extract, model_predict, write_predictions_csv, SortBy};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "tlvision", version, about = "Transfer-learning image classification runs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// TOML or JSON experiment config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `section.key=value`, applied over the config file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train, evaluate and export a run; prints the export directory.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Base directory for exported runs.
        #[arg(long, default_value = DEFAULT_OUT)]
        out: PathBuf,
        /// Reuse `<out>/run` instead of a new random directory.
        #[arg(long)]
        overwrite: bool,
        /// Skip writing the full model.
        #[arg(long)]
        no_model: bool,
    },
    /// Predict every image in a folder with an exported run.
    Predict {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        folder: PathBuf,
        #[arg(long, default_value = "variance")]
        sort_by: String,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write per-split feature matrices of one layer as CSV.
    Extract {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, conflicts_with = "layer_index", required_unless_present = "layer_index")]
        layer_name: Option<String>,
        #[arg(long)]
        layer_index: Option<usize>,
        /// Overrides applied to the run's recorded config, e.g. data paths.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "features")]
        out: PathBuf,
    },
    /// Re-export an exported run under a new base directory.
    Export {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value = DEFAULT_OUT)]
        out: PathBuf,
        #[arg(long)]
        overwrite: bool,
        #[arg(long)]
        no_model: bool,
    },
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String, Value)>> {
    raw.iter().map(|s| parse_override(s)).collect()
}

/// Defaults, then the config file, then `--set` overrides.
pub fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut document = match &args.config {
        Some(path) => read_document(path)?,
        None => Value::Null,
    };
    let overrides = parse_overrides(&args.overrides)?;
    if !overrides.is_empty() {
        merge_overrides(&mut document, &overrides);
    }
    ExperimentConfig::apply_defaults(&document)
}

fn absolutize(run_dir: &Path, paths: &[PathBuf]) -> Vec<PathBuf> {
    paths.iter().map(|p| run_dir.join(p)).collect()
}

/// Executes one parsed command and returns what it prints on success.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            overwrite,
            no_model,
        } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let staging = out.join(format!(".staging-{}", std::process::id()));
            let outcome = Experiment::new(cfg, seed).with_work_dir(&staging).run();
            let exported = outcome.and_then(|run| {
                export_all(
                    &run.results,
                    Some(&run.model),
                    &out,
                    ExportOptions {
                        export_model: !no_model,
                        additive: !overwrite,
                    },
                )
            });
            if staging.exists() {
                std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
            }
            Ok(exported?.display().to_string())
        }
        Command::Predict {
            run_dir,
            folder,
            sort_by,
            out,
        } => {
            let sort_by: SortBy = sort_by.parse()?;
            let (_, model) = load_run_model(&run_dir)?;
            let predictions = model_predict(&model, &folder, sort_by)?;
            for (path, reason) in &predictions.skipped {
                eprintln!("warning: skipped {}: {reason}", path.display());
            }
            match out {
                Some(path) => {
                    write_predictions_csv(&predictions.records, &path)?;
                    Ok(path.display().to_string())
                }
                None => {
                    let tmp = std::env::temp_dir()
                        .join(format!("tlvision-predict-{}.csv", std::process::id()));
                    write_predictions_csv(&predictions.records, &tmp)?;
                    let text = std::fs::read_to_string(&tmp).map_err(|e| Error::io(&tmp, e))?;
                    let _ = std::fs::remove_file(&tmp);
                    Ok(text.trim_end().to_string())
                }
            }
        }
        Command::Extract {
            run_dir,
            layer_name,
            layer_index,
            overrides,
            out,
        } => {
            let (results, model) = load_run_model(&run_dir)?;
            let mut document = results.config.clone();
            merge_overrides(&mut document, &parse_overrides(&overrides)?);
            let cfg = ExperimentConfig::apply_defaults(&document)?;
            let data = load_data(
                &cfg,
                results.seed,
                model.image_size(),
                model.backbone().preprocess,
            )?;
            let features =
                model_feature_extract(&model, &data, layer_index, layer_name.as_deref())?;
            let files = features.write_csv(&out, &data.task().class_names())?;
            Ok(files
                .iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join("\n"))
        }
        Command::Export {
            run_dir,
            out,
            overwrite,
            no_model,
        } => {
            let (mut results, model) = load_run_model(&run_dir)?;
            results.artifacts.weights = absolutize(&run_dir, &results.artifacts.weights);
            results.artifacts.plots = absolutize(&run_dir, &results.artifacts.plots);
            let dir = export_all(
                &results,
                Some(&model),
                &out,
                ExportOptions {
                    export_model: !no_model,
                    additive: !overwrite,
                },
            )?;
            Ok(dir.display().to_string())
        }
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(text) => {
            if !text.is_empty() {
                println!("{text}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.to_string().lines().next().unwrap_or_default());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_requires_run_dir() {
        assert_eq!(main(["tlvision", "predict", "--folder", "x"]), 2);
    }

    #[test]
    fn unknown_flag_is_usage_error() {
        assert_eq!(main(["tlvision", "run", "--bogus"]), 2);
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "[training]\nepochs = 3\nbatch_size = 4\n").unwrap();
        let cfg = load_config(&ConfigArgs {
            config: Some(path),
            overrides: vec!["training.epochs=7".into()],
        })
        .unwrap();
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.batch_size, 4);
        assert_eq!(cfg.training.learning_rate, ExperimentConfig::default().training.learning_rate);
    }

    #[test]
    fn pipeline_error_exit_code() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("runs");
        let code = main([
            "tlvision".to_string(),
            "run".into(),
            "--set".into(),
            format!("paths.train_val_data={}", dir.path().join("missing").display()),
            "--out".into(),
            out.display().to_string(),
        ]);
        assert_eq!(code, 1);
    }
}
