//! Folder prediction ranked by confidence or variance, and per-split
//! feature extraction from any layer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::bundle::images_to_tensor;
use crate::data::image::load_resized;
use crate::data::layout::list_images;
use crate::data::{DatasetBundle, Image, Split};
use crate::error::{Error, Result};
use crate::nn::BuiltModel;

const PREDICT_BATCH: usize = 32;
const NORMALIZATION_TOLERANCE: f64 = 1e-3;

/// Population variance of a probability vector around its mean `1/K`.
pub fn prediction_variance(probs: &[f64]) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::Prediction("empty probability vector".into()));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| p < 0.0 || !p.is_finite())
        || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE
    {
        return Err(Error::Prediction(format!(
            "not a probability vector (sum {sum})"
        )));
    }
    let k = probs.len() as f64;
    let mean = 1.0 / k;
    Ok(probs.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SortBy {
    /// Ascending variance, so the least decided images come first.
    Variance,
    /// Ascending confidence.
    Confidence,
    /// Lexicographic path order.
    None,
}

impl FromStr for SortBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(SortBy::Variance),
            "confidence" => Ok(SortBy::Confidence),
            "none" => Ok(SortBy::None),
            other => Err(Error::InvalidArgument(format!(
                "sort order must be variance, confidence or none, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for SortBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SortBy::Variance => "variance",
            SortBy::Confidence => "confidence",
            SortBy::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub path: PathBuf,
    /// The resized input, when requested.
    pub image: Option<Image>,
    pub predicted_label: String,
    pub confidence: f64,
    pub variance: f64,
    /// Per-class probabilities; binary outputs `p` become `(1 - p, p)`.
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub records: Vec<PredictionRecord>,
    /// Files that could not be decoded, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictOptions {
    pub sort_by: SortBy,
    pub keep_images: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            sort_by: SortBy::Variance,
            keep_images: false,
        }
    }
}

/// Predicts every image directly inside `folder`, resized and preprocessed
/// as during training.
pub fn model_predict(model: &BuiltModel, folder: &Path, sort_by: SortBy) -> Result<Predictions> {
    model_predict_with(
        model,
        folder,
        PredictOptions {
            sort_by,
            keep_images: false,
        },
    )
}

pub fn model_predict_with(
    model: &BuiltModel,
    folder: &Path,
    options: PredictOptions,
) -> Result<Predictions> {
    let files = list_images(folder)?;
    let mut skipped = Vec::new();
    let mut loaded = Vec::new();
    for path in files {
        match load_resized(&path, model.image_size()) {
            Ok(img) => loaded.push((path, Image::from_rgb8(&img))),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                skipped.push((path, e.to_string()));
            }
        }
    }
    if loaded.is_empty() {
        return Err(Error::Prediction(format!(
            "no decodable images in {}",
            folder.display()
        )));
    }
    let task = model.task();
    let names = task.class_names();
    let preprocess = model.backbone().preprocess;
    let mut records = Vec::with_capacity(loaded.len());
    for chunk in loaded.chunks(PREDICT_BATCH) {
        let images: Vec<Image> = chunk.iter().map(|(_, img)| img.clone()).collect();
        let probs = model
            .predict_proba(&images_to_tensor(&images, preprocess)?)?
            .to_vec2::<f32>()?;
        for ((path, img), row) in chunk.iter().zip(probs) {
            let probabilities: Vec<f64> = if task.is_binary() {
                let p = row[0] as f64;
                vec![1.0 - p, p]
            } else {
                row.iter().map(|&p| p as f64).collect()
            };
            let mut best = 0;
            for (i, &p) in probabilities.iter().enumerate().skip(1) {
                if p > probabilities[best] {
                    best = i;
                }
            }
            // binary ties at 0.5 resolve to the positive class, as in evaluation
            if task.is_binary() && probabilities[1] >= 0.5 {
                best = 1;
            }
            records.push(PredictionRecord {
                path: path.clone(),
                image: options.keep_images.then(|| img.clone()),
                predicted_label: names[best].clone(),
                confidence: probabilities[best],
                variance: prediction_variance(&probabilities)?,
                probabilities,
            });
        }
    }
    match options.sort_by {
        SortBy::Variance => records.sort_by(|a, b| a.variance.total_cmp(&b.variance)),
        SortBy::Confidence => records.sort_by(|a, b| a.confidence.total_cmp(&b.confidence)),
        SortBy::None => {}
    }
    Ok(Predictions { records, skipped })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    path: String,
    predicted_label: &'a str,
    confidence: f64,
    variance: f64,
}

/// Writes `path,predicted_label,confidence,variance`.
pub fn write_predictions_csv(records: &[PredictionRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for r in records {
        writer.serialize(CsvRow {
            path: r.path.display().to_string(),
            predicted_label: &r.predicted_label,
            confidence: r.confidence,
            variance: r.variance,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Features of one split, row-aligned with the split's file index.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitFeatures {
    pub features: Array2<f32>,
    pub labels: Vec<usize>,
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSplit {
    pub layer_name: String,
    pub layer_index: usize,
    pub width: usize,
    /// Only splits present in the bundle.
    pub splits: BTreeMap<Split, SplitFeatures>,
}

impl FeatureSplit {
    pub fn get(&self, split: Split) -> Option<&SplitFeatures> {
        self.splits.get(&split)
    }

    /// One `features_<split>.csv` per split with columns
    /// `path,label,f0..f{width-1}`.
    pub fn write_csv(&self, dir: &Path, class_names: &[String]) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for (split, data) in &self.splits {
            let path = dir.join(format!("features_{}.csv", split.name()));
            let mut writer = csv::Writer::from_path(&path)?;
            let mut header = vec!["path".to_string(), "label".to_string()];
            header.extend((0..self.width).map(|i| format!("f{i}")));
            writer.write_record(&header)?;
            for (row, (p, &label)) in data.paths.iter().zip(&data.labels).enumerate() {
                let mut fields = vec![p.display().to_string(), class_names[label].clone()];
                fields.extend(data.features.row(row).iter().map(|v| v.to_string()));
                writer.write_record(&fields)?;
            }
            writer.flush().map_err(|e| Error::io(&path, e))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Activations of one layer for every available split, in index order and
/// without augmentation. Map outputs are flattened in `(h, w, c)` order.
/// Exactly one of `layer_index` and `layer_name` must be given.
pub fn model_feature_extract(
    model: &BuiltModel,
    bundle: &DatasetBundle,
    layer_index: Option<usize>,
    layer_name: Option<&str>,
) -> Result<FeatureSplit> {
    let index = match (layer_index, layer_name) {
        (Some(i), None) => {
            if i >= model.layers().len() {
                return Err(Error::UnknownLayer(format!("index {i}")));
            }
            i
        }
        (None, Some(name)) => model
            .layer_index(name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))?,
        _ => {
            return Err(Error::InvalidArgument(
                "give exactly one of a layer index and a layer name".into(),
            ))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut splits = BTreeMap::new();
    let mut width = 0;
    for split in bundle.splits() {
        let mut rows: Vec<f32> = Vec::new();
        let mut labels = Vec::new();
        for batch in bundle.eval_batches(split)? {
            let batch = batch?;
            let out = model.forward_to(&batch.images, index, false, false, &mut rng)?;
            let b = out.dim(0)?;
            let flat = out.reshape((b, out.elem_count() / b))?;
            width = flat.dim(1)?;
            rows.extend(flat.flatten_all()?.to_vec1::<f32>()?);
            labels.extend_from_slice(&batch.label_ids);
        }
        let n = labels.len();
        let features = Array2::from_shape_vec((n, width), rows)
            .map_err(|e| Error::Prediction(e.to_string()))?;
        let paths = bundle
            .index(split)
            .map(|idx| idx.iter().map(|e| e.path.clone()).collect())
            .unwrap_or_default();
        splits.insert(
            split,
            SplitFeatures {
                features,
                labels,
                paths,
            },
        );
    }
    Ok(FeatureSplit {
        layer_name: model.layers()[index].name().to_string(),
        layer_index: index,
        width,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_examples() {
        assert_eq!(prediction_variance(&[0.25; 4]).unwrap(), 0.0);
        assert!((prediction_variance(&[1.0, 0.0, 0.0, 0.0]).unwrap() - 0.1875).abs() < 1e-12);
        assert_eq!(prediction_variance(&[0.5, 0.5]).unwrap(), 0.0);
        assert!(prediction_variance(&[0.5, 0.4]).is_err());
        assert!(prediction_variance(&[]).is_err());
    }

    #[test]
    fn sort_by_parsing() {
        assert_eq!("variance".parse::<SortBy>().unwrap(), SortBy::Variance);
        assert_eq!(SortBy::Confidence.to_string(), "confidence");
        assert!("accuracy".parse::<SortBy>().is_err());
    }
}
