//! Writes a run to disk: `results.json`, best weights, plots, optionally the
//! full model, and a `manifest.json` listing every file.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ResultsBundle;
use crate::nn::{BuiltModel, ModelSpec};
use crate::seed::derive_seed;

pub const RESULTS_FILE: &str = "results.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_SPEC_FILE: &str = "model.json";
pub const MODEL_WEIGHTS_FILE: &str = "model.safetensors";
pub const PLOTS_DIR: &str = "plots";
/// Directory name used by non-additive exports.
pub const FIXED_RUN_DIR: &str = "run";

const SUFFIX_LEN: usize = 8;
const MAX_ATTEMPTS: usize = 64;
const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExportOptions {
    pub export_model: bool,
    /// New randomly named directory per call instead of a fixed one.
    pub additive: bool,
}

impl Default for ExportOptions {
    fn default() -> Self {
        ExportOptions {
            export_model: true,
            additive: true,
        }
    }
}

fn entropy() -> u64 {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ (std::process::id() as u64).rotate_left(32) ^ COUNTER.fetch_add(1, Ordering::Relaxed)
}

/// Eight lowercase alphanumerics drawn from `seed`.
pub fn random_suffix(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SUFFIX_LEN)
        .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
        .collect()
}

fn copy_into(src: &Path, dir: &Path) -> Result<String> {
    let name = src
        .file_name()
        .ok_or_else(|| Error::Export(format!("{} has no file name", src.display())))?;
    let dest = dir.join(name);
    std::fs::copy(src, &dest).map_err(|e| Error::io(src, e))?;
    Ok(name.to_string_lossy().into_owned())
}

fn create_run_dir(base: &Path, results: &ResultsBundle, additive: bool) -> Result<(String, PathBuf)> {
    std::fs::create_dir_all(base).map_err(|e| Error::io(base, e))?;
    if !additive {
        let dir = base.join(FIXED_RUN_DIR);
        if dir.exists() {
            std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        std::fs::create_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        return Ok((FIXED_RUN_DIR.to_string(), dir));
    }
    for attempt in 0..MAX_ATTEMPTS {
        let id = format!(
            "run_{}",
            random_suffix(derive_seed(results.seed, "export", entropy() ^ attempt as u64))
        );
        let dir = base.join(&id);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok((id, dir)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    Err(Error::Export(format!(
        "no free run directory under {} after {MAX_ATTEMPTS} attempts",
        base.display()
    )))
}

/// Exports `results` under `base` and returns the run directory.
///
/// Artifact paths in the written `results.json` are relative to that
/// directory. `model` is required when `export_model` is set.
pub fn export_all(
    results: &ResultsBundle,
    model: Option<&BuiltModel>,
    base: &Path,
    options: ExportOptions,
) -> Result<PathBuf> {
    if options.export_model && model.is_none() {
        return Err(Error::Export("model export requested without a model".into()));
    }
    let (run_id, dir) = create_run_dir(base, results, options.additive)?;

    let mut bundle = results.clone();
    bundle.artifacts.weights = results
        .artifacts
        .weights
        .iter()
        .map(|p| copy_into(p, &dir).map(PathBuf::from))
        .collect::<Result<_>>()?;
    if !results.artifacts.plots.is_empty() {
        let plots = dir.join(PLOTS_DIR);
        std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        bundle.artifacts.plots = results
            .artifacts
            .plots
            .iter()
            .map(|p| copy_into(p, &plots).map(|n| Path::new(PLOTS_DIR).join(n)))
            .collect::<Result<_>>()?;
    }
    let results_path = dir.join(RESULTS_FILE);
    std::fs::write(&results_path, bundle.to_json()?).map_err(|e| Error::io(&results_path, e))?;

    let mut listed: Vec<PathBuf> = vec![PathBuf::from(RESULTS_FILE)];
    listed.extend(bundle.artifacts.weights.iter().cloned());
    listed.extend(bundle.artifacts.plots.iter().cloned());
    if let (true, Some(model)) = (options.export_model, model) {
        let spec_path = dir.join(MODEL_SPEC_FILE);
        std::fs::write(&spec_path, serde_json::to_string_pretty(&model.spec())?)
            .map_err(|e| Error::io(&spec_path, e))?;
        model.save_weights(&dir.join(MODEL_WEIGHTS_FILE))?;
        listed.push(PathBuf::from(MODEL_SPEC_FILE));
        listed.push(PathBuf::from(MODEL_WEIGHTS_FILE));
    }

    let mut files = Vec::new();
    for rel in listed {
        let full = dir.join(&rel);
        let bytes = std::fs::metadata(&full).map_err(|e| Error::io(&full, e))?.len();
        files.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes,
        });
    }
    let manifest = Manifest { run_id, files };
    let manifest_path = dir.join(MANIFEST_FILE);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(dir)
}

/// Rebuilds the model saved in a run directory: the full model when it was
/// exported, otherwise the recorded architecture with the best weights.
pub fn load_run_model(run_dir: &Path) -> Result<(ResultsBundle, BuiltModel)> {
    let results = ResultsBundle::read(&run_dir.join(RESULTS_FILE))?;
    let spec_path = run_dir.join(MODEL_SPEC_FILE);
    let spec: ModelSpec = if spec_path.exists() {
        let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        serde_json::from_str(&text)?
    } else {
        results.model.clone()
    };
    let model = BuiltModel::from_spec(&spec)?;
    let full = run_dir.join(MODEL_WEIGHTS_FILE);
    let weights = if full.exists() {
        full
    } else {
        results
            .artifacts
            .weights
            .first()
            .map(|p| run_dir.join(p))
            .ok_or_else(|| Error::Export(format!("{} holds no weights", run_dir.display())))?
    };
    model.load_weights(&weights)?;
    Ok((results, model))
}
