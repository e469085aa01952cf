use std::collections::BTreeMap;
use std::path::PathBuf;

use candle_core::{Device, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::AugmentationPlan;
use super::image::{load_resized, Image};
use super::layout::{class_files, Split, SplitLayout};
use super::task::TaskSpec;
use crate::backbone::Preprocess;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// One indexed file and its class id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: PathBuf,
    pub label: usize,
}

struct SplitData {
    index: Vec<IndexEntry>,
    pixels: Vec<image::RgbImage>,
}

/// A batch in NHWC layout with labels encoded for the task.
#[derive(Debug, Clone)]
pub struct Batch {
    /// `(b, h, w, 3)` after augmentation and preprocessing.
    pub images: Tensor,
    /// `(b,)` with 0/1 for binary tasks, `(b, K)` one-hot otherwise.
    pub labels: Tensor,
    pub label_ids: Vec<usize>,
    /// Positions in the split index.
    pub indices: Vec<usize>,
}

/// Resized, preprocessed and batched splits with a stable file order.
///
/// Images are decoded and resized once at construction and kept in memory as
/// 8-bit RGB. Only the training stream is shuffled and augmented; every other
/// stream is read in index order.
pub struct DatasetBundle {
    task: TaskSpec,
    image_size: (u32, u32),
    batch_size: usize,
    seed: u64,
    plan: AugmentationPlan,
    preprocess: Preprocess,
    splits: BTreeMap<Split, SplitData>,
}

impl std::fmt::Debug for DatasetBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DatasetBundle")
            .field("image_size", &self.image_size)
            .field("batch_size", &self.batch_size)
            .field("seed", &self.seed)
            .field(
                "splits",
                &self
                    .splits
                    .iter()
                    .map(|(s, d)| (s.name(), d.index.len()))
                    .collect::<Vec<_>>(),
            )
            .finish()
    }
}

pub fn build_bundle(
    layout: &SplitLayout,
    task: &TaskSpec,
    image_size: (u32, u32),
    preprocess: Preprocess,
    plan: AugmentationPlan,
    batch_size: usize,
    seed: u64,
) -> Result<DatasetBundle> {
    if image_size.0 == 0 || image_size.1 == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let mut splits = BTreeMap::new();
    for split in layout.splits() {
        let dir = layout.dir(split).expect("split listed by layout");
        let mut index = Vec::new();
        for (class, files) in class_files(dir)? {
            let label = *task.class_index.get(&class).ok_or_else(|| Error::ClassMismatch {
                left: "task".into(),
                right: split.name().into(),
                difference: vec![class.clone()],
            })?;
            index.extend(files.into_iter().map(|path| IndexEntry { path, label }));
        }
        if index.is_empty() {
            return Err(Error::EmptySplit(split.name().into()));
        }
        let pixels = index
            .iter()
            .map(|e| load_resized(&e.path, image_size))
            .collect::<Result<Vec<_>>>()?;
        splits.insert(split, SplitData { index, pixels });
    }
    Ok(DatasetBundle {
        task: task.clone(),
        image_size,
        batch_size,
        seed,
        plan,
        preprocess,
        splits,
    })
}

impl DatasetBundle {
    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn plan(&self) -> &AugmentationPlan {
        &self.plan
    }

    pub fn preprocess(&self) -> Preprocess {
        self.preprocess
    }

    pub fn splits(&self) -> Vec<Split> {
        self.splits.keys().copied().collect()
    }

    pub fn has_split(&self, split: Split) -> bool {
        self.splits.contains_key(&split)
    }

    pub fn index(&self, split: Split) -> Option<&[IndexEntry]> {
        self.splits.get(&split).map(|d| d.index.as_slice())
    }

    pub fn len(&self, split: Split) -> usize {
        self.index(split).map(|i| i.len()).unwrap_or(0)
    }

    pub fn is_empty(&self, split: Split) -> bool {
        self.len(split) == 0
    }

    pub fn num_batches(&self, split: Split) -> usize {
        self.len(split).div_ceil(self.batch_size)
    }

    /// Per-class image counts of the training split.
    pub fn train_counts(&self) -> BTreeMap<String, usize> {
        let names = self.task.class_names();
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for entry in self.index(Split::Train).unwrap_or(&[]) {
            *counts.entry(names[entry.label].clone()).or_default() += 1;
        }
        counts
    }

    /// Shuffled, augmented training batches. `epoch` selects the shuffle and
    /// augmentation stream, so the same epoch number replays the same batches.
    pub fn train_batches(&self, epoch: u64) -> Result<BatchIter<'_>> {
        let data = self
            .splits
            .get(&Split::Train)
            .ok_or_else(|| Error::EmptySplit("train".into()))?;
        let mut order: Vec<usize> = (0..data.index.len()).collect();
        let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "shuffle", epoch));
        order.shuffle(&mut shuffle);
        let augment = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, "augment", epoch));
        Ok(BatchIter {
            bundle: self,
            data,
            order,
            pos: 0,
            augment: Some(augment),
        })
    }

    /// Deterministic batches in index order without augmentation.
    pub fn eval_batches(&self, split: Split) -> Result<BatchIter<'_>> {
        let data = self
            .splits
            .get(&split)
            .ok_or_else(|| Error::EmptySplit(split.name().into()))?;
        Ok(BatchIter {
            bundle: self,
            data,
            order: (0..data.index.len()).collect(),
            pos: 0,
            augment: None,
        })
    }

    /// Converts resized images into a preprocessed NHWC tensor.
    pub fn images_to_tensor(&self, images: &[Image]) -> Result<Tensor> {
        images_to_tensor(images, self.preprocess)
    }
}

pub(crate) fn images_to_tensor(images: &[Image], preprocess: Preprocess) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty image batch".into()))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w * 3);
    for img in images {
        let mut img = img.clone();
        preprocess.apply(&mut img);
        data.extend_from_slice(&img.data);
    }
    Ok(Tensor::from_vec(data, (images.len(), h, w, 3), &Device::Cpu)?)
}

/// Encodes class ids for the task: scalars for binary, one-hot otherwise.
pub fn encode_labels(ids: &[usize], task: &TaskSpec) -> Result<Tensor> {
    if task.is_binary() {
        let v: Vec<f32> = ids.iter().map(|&i| i as f32).collect();
        Ok(Tensor::from_vec(v, ids.len(), &Device::Cpu)?)
    } else {
        let k = task.num_classes;
        let mut v = vec![0f32; ids.len() * k];
        for (row, &id) in ids.iter().enumerate() {
            v[row * k + id] = 1.0;
        }
        Ok(Tensor::from_vec(v, (ids.len(), k), &Device::Cpu)?)
    }
}

pub struct BatchIter<'a> {
    bundle: &'a DatasetBundle,
    data: &'a SplitData,
    order: Vec<usize>,
    pos: usize,
    augment: Option<ChaCha8Rng>,
}

impl BatchIter<'_> {
    /// Split positions in the order they will be yielded.
    pub fn order(&self) -> &[usize] {
        &self.order
    }
}

impl Iterator for BatchIter<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.bundle.batch_size).min(self.order.len());
        let indices: Vec<usize> = self.order[self.pos..end].to_vec();
        self.pos = end;

        let mut images = Vec::with_capacity(indices.len());
        for &i in &indices {
            let img = Image::from_rgb8(&self.data.pixels[i]);
            let img = match self.augment.as_mut() {
                Some(rng) => self.bundle.plan.apply(&img, rng),
                None => img,
            };
            images.push(img);
        }
        let label_ids: Vec<usize> = indices.iter().map(|&i| self.data.index[i].label).collect();
        let result = (|| {
            Ok(Batch {
                images: self.bundle.images_to_tensor(&images)?,
                labels: encode_labels(&label_ids, &self.bundle.task)?,
                label_ids,
                indices,
            })
        })();
        Some(result)
    }
}
