//! Directory discovery, task inference, class weighting and batching.

pub mod augment;
pub mod bundle;
pub mod image;
pub mod layout;
pub mod task;

pub use augment::{resolve_augmentation, AugmentationPlan, BasicAugmentation, ImageTransform};
pub use bundle::{build_bundle, encode_labels, Batch, BatchIter, DatasetBundle, IndexEntry};
pub use image::{Image, IMAGE_EXTENSIONS};
pub use layout::{discover_splits, Split, SplitLayout};
pub use task::{compute_class_weights, infer_task, LossKind, OutputActivation, TaskMode, TaskSpec};
