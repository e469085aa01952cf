//! Registry of transfer architectures.
//!
//! A [`BackboneHandle`] describes an architecture: its canonical input size,
//! the preprocessing its weights expect, the ordered layer list and the
//! `cblock<N>` map used by freeze policies. Variables are only created when a
//! model is assembled, and pretrained weights are read from the on-disk cache
//! at that point.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{Error, Result};
use crate::nn::{Activation, FeatureShape, LayerKind, LayerSpec};

/// Environment variable overriding the weight cache directory.
pub const WEIGHTS_DIR_ENV: &str = "TLVISION_WEIGHTS_DIR";
pub const WEIGHTS_FORMAT_VERSION: &str = "v1";
pub const WEIGHT_SOURCES: [&str; 2] = ["imagenet", "none"];

const REGISTRY: [&str; 3] = ["TinyNet", "VGG16", "VGG19"];

/// Input transform matching how a backbone's weights were trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    /// RGB to BGR, then subtract the ImageNet channel means (VGG family).
    Caffe,
    /// Scale `0..=255` to `[-1, 1]`.
    Tf,
}

const CAFFE_BGR_MEAN: [f32; 3] = [103.939, 116.779, 123.68];

impl Preprocess {
    pub fn apply(self, image: &mut Image) {
        match self {
            Preprocess::Caffe => {
                for px in image.data.chunks_exact_mut(3) {
                    let (r, g, b) = (px[0], px[1], px[2]);
                    px[0] = b - CAFFE_BGR_MEAN[0];
                    px[1] = g - CAFFE_BGR_MEAN[1];
                    px[2] = r - CAFFE_BGR_MEAN[2];
                }
            }
            Preprocess::Tf => {
                for v in image.data.iter_mut() {
                    *v = *v / 127.5 - 1.0;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightSource {
    Random,
    Cached { source: String, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneHandle {
    pub name: String,
    /// `(height, width)`
    pub input_size: (u32, u32),
    pub preprocess: Preprocess,
    pub layers: Vec<LayerSpec>,
    pub block_map: BTreeMap<String, BTreeSet<String>>,
    pub weights: WeightSource,
}

impl BackboneHandle {
    /// `(layer name, parameter count)` for every layer, in order.
    pub fn layer_params(&self) -> Vec<(String, usize)> {
        let mut shape = FeatureShape::Map(self.input_size.0 as usize, self.input_size.1 as usize, 3);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            out.push((layer.name.clone(), layer.kind.param_count(shape)));
            shape = layer.kind.output_shape(shape).expect("registry geometry is valid");
        }
        out
    }

    /// Output feature-map shape `(h, w, c)` for an input of `image_size`.
    pub fn feature_shape(&self, image_size: (u32, u32)) -> Result<FeatureShape> {
        let mut shape = FeatureShape::Map(image_size.0 as usize, image_size.1 as usize, 3);
        for layer in &self.layers {
            shape = layer.kind.output_shape(shape)?;
        }
        Ok(shape)
    }

    pub fn block_names(&self) -> Vec<String> {
        self.block_map.keys().cloned().collect()
    }

    pub fn has_layer(&self, name: &str) -> bool {
        self.layers.iter().any(|l| l.name == name)
    }
}

pub fn list_backbones() -> Vec<String> {
    REGISTRY.iter().map(|s| s.to_string()).collect()
}

/// Looks up a backbone, resolving pretrained weights through the cache
/// directory from [`WEIGHTS_DIR_ENV`].
pub fn get_backbone(name: &str, pretrained: &str) -> Result<BackboneHandle> {
    get_backbone_with_cache(name, pretrained, &WeightCache::from_env())
}

pub fn get_backbone_with_cache(
    name: &str,
    pretrained: &str,
    cache: &WeightCache,
) -> Result<BackboneHandle> {
    let (input_size, preprocess, layers) = match name {
        "TinyNet" => ((32, 32), Preprocess::Tf, conv_stack(&[(2, 16), (2, 24)])),
        "VGG16" => (
            (224, 224),
            Preprocess::Caffe,
            conv_stack(&[(2, 64), (2, 128), (3, 256), (3, 512), (3, 512)]),
        ),
        "VGG19" => (
            (224, 224),
            Preprocess::Caffe,
            conv_stack(&[(2, 64), (2, 128), (4, 256), (4, 512), (4, 512)]),
        ),
        _ => {
            return Err(Error::UnknownBackbone {
                name: name.to_string(),
                registered: list_backbones(),
            })
        }
    };
    let weights = match pretrained {
        "none" => WeightSource::Random,
        source if WEIGHT_SOURCES.contains(&source) => WeightSource::Cached {
            source: source.to_string(),
            path: cache.path(name, source),
        },
        other => {
            return Err(Error::WeightsUnavailable {
                backbone: name.to_string(),
                source_name: other.to_string(),
                message: format!("unknown weight source; expected one of {WEIGHT_SOURCES:?}"),
            })
        }
    };
    let block_map = block_map(&layers);
    Ok(BackboneHandle {
        name: name.to_string(),
        input_size,
        preprocess,
        layers,
        block_map,
        weights,
    })
}

/// VGG-style stack: per stage, `n` 3x3 relu convolutions then a 2x2 pool.
fn conv_stack(stages: &[(usize, usize)]) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for (i, &(convs, filters)) in stages.iter().enumerate() {
        let block = i + 1;
        for c in 1..=convs {
            layers.push(LayerSpec::new(
                format!("block{block}_conv{c}"),
                LayerKind::Conv2d {
                    filters,
                    kernel: 3,
                    activation: Activation::Relu,
                },
            ));
        }
        layers.push(LayerSpec::new(
            format!("block{block}_pool"),
            LayerKind::MaxPool { size: 2 },
        ));
    }
    layers
}

/// `cblock<N>` holds the convolutions of the N-th stage, i.e. the layers
/// between the (N-1)-th and N-th pooling boundaries.
fn block_map(layers: &[LayerSpec]) -> BTreeMap<String, BTreeSet<String>> {
    let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut stage = 1;
    for layer in layers {
        match layer.kind {
            LayerKind::MaxPool { .. } => stage += 1,
            LayerKind::Conv2d { .. } => {
                map.entry(format!("cblock{stage}"))
                    .or_default()
                    .insert(layer.name.clone());
            }
            _ => {}
        }
    }
    map
}

/// Union of the named blocks' layer names.
pub fn resolve_blocks(handle: &BackboneHandle, block_names: &[String]) -> Result<BTreeSet<String>> {
    let mut out = BTreeSet::new();
    for name in block_names {
        let layers = handle.block_map.get(name).ok_or_else(|| Error::UnknownBlock {
            name: name.clone(),
            valid: handle.block_names(),
        })?;
        out.extend(layers.iter().cloned());
    }
    Ok(out)
}

/// On-disk store of pretrained weights, keyed by backbone, weight source and
/// format version: `<dir>/<backbone>/<source>/<version>/weights.safetensors`.
///
/// Tensors are named `<layer>.kernel` with shape `(out, in, k, k)` and
/// `<layer>.bias`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightCache {
    dir: PathBuf,
}

impl WeightCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn from_env() -> Self {
        if let Some(dir) = std::env::var_os(WEIGHTS_DIR_ENV) {
            return Self::new(dir);
        }
        let home = std::env::var_os("HOME")
            .map(PathBuf::from)
            .unwrap_or_else(std::env::temp_dir);
        Self::new(home.join(".cache").join("tlvision").join("weights"))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, backbone: &str, source: &str) -> PathBuf {
        self.dir
            .join(backbone)
            .join(source)
            .join(WEIGHTS_FORMAT_VERSION)
            .join("weights.safetensors")
    }

    /// Stores weights atomically: concurrent installs of the same entry
    /// never leave a partially written file behind.
    pub fn install(
        &self,
        backbone: &str,
        source: &str,
        tensors: &HashMap<String, Tensor>,
    ) -> Result<PathBuf> {
        let target = self.path(backbone, source);
        let parent = target.parent().expect("cache path has a parent");
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        let tmp = parent.join(format!(
            ".weights.{}.{}.tmp",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_nanos())
                .unwrap_or(0)
        ));
        candle_core::safetensors::save(tensors, &tmp)?;
        std::fs::rename(&tmp, &target).map_err(|e| Error::io(&target, e))?;
        Ok(target)
    }
}

/// Reads the tensors a handle refers to; `None` for randomly initialized
/// backbones.
pub fn load_weights(handle: &BackboneHandle) -> Result<Option<HashMap<String, Tensor>>> {
    match &handle.weights {
        WeightSource::Random => Ok(None),
        WeightSource::Cached { source, path } => {
            if !path.is_file() {
                return Err(Error::WeightsUnavailable {
                    backbone: handle.name.clone(),
                    source_name: source.clone(),
                    message: format!(
                        "no cached weights at {}; install them there or use pre_trained = \"none\"",
                        path.display()
                    ),
                });
            }
            Ok(Some(candle_core::safetensors::load(path, &Device::Cpu)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_contents() {
        let names = list_backbones();
        assert!(names.contains(&"VGG16".to_string()));
        assert!(names.contains(&"VGG19".to_string()));
        assert!(names.contains(&"TinyNet".to_string()));
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn vgg16_geometry() {
        let h = get_backbone("VGG16", "imagenet").unwrap();
        assert_eq!(h.input_size, (224, 224));
        assert_eq!(
            h.block_names(),
            vec!["cblock1", "cblock2", "cblock3", "cblock4", "cblock5"]
        );
        assert_eq!(h.feature_shape((224, 224)).unwrap(), FeatureShape::Map(7, 7, 512));
        // 14,714,688 convolutional parameters in VGG16 without its top
        let total: usize = h.layer_params().iter().map(|(_, n)| n).sum();
        assert_eq!(total, 14_714_688);
        assert_eq!(h.preprocess, Preprocess::Caffe);
    }

    #[test]
    fn vgg19_parameter_total() {
        let h = get_backbone("VGG19", "none").unwrap();
        let total: usize = h.layer_params().iter().map(|(_, n)| n).sum();
        assert_eq!(total, 20_024_384);
        assert_eq!(h.block_map["cblock5"].len(), 4);
    }

    #[test]
    fn tinynet_stub() {
        let h = get_backbone("TinyNet", "none").unwrap();
        assert_eq!(h.input_size, (32, 32));
        assert_eq!(h.block_names(), vec!["cblock1", "cblock2"]);
        assert_eq!(h.weights, WeightSource::Random);
        let params = h.layer_params();
        // per-layer k*k*in*out + out
        let expected = [
            ("block1_conv1", 3 * 3 * 3 * 16 + 16),
            ("block1_conv2", 3 * 3 * 16 * 16 + 16),
            ("block1_pool", 0),
            ("block2_conv1", 3 * 3 * 16 * 24 + 24),
            ("block2_conv2", 3 * 3 * 24 * 24 + 24),
            ("block2_pool", 0),
        ];
        assert_eq!(params.len(), expected.len());
        for ((name, n), (en, ecount)) in params.iter().zip(expected) {
            assert_eq!((name.as_str(), *n), (en, ecount));
        }
        let total: usize = params.iter().map(|(_, n)| n).sum();
        assert_eq!(total, 11_456);
        assert_eq!(h.feature_shape((32, 32)).unwrap(), FeatureShape::Map(8, 8, 24));
    }

    #[test]
    fn unknown_backbone_lists_registry() {
        match get_backbone("NopeNet", "imagenet") {
            Err(Error::UnknownBackbone { registered, .. }) => assert_eq!(registered, list_backbones()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_weight_source() {
        assert!(matches!(
            get_backbone("VGG16", "cifar"),
            Err(Error::WeightsUnavailable { .. })
        ));
    }

    #[test]
    fn handles_are_pure() {
        let a = get_backbone("VGG19", "imagenet").unwrap();
        let b = get_backbone("VGG19", "imagenet").unwrap();
        assert_eq!(a.layers, b.layers);
        assert_eq!(a.block_map, b.block_map);
    }

    #[test]
    fn block_resolution() {
        let h = get_backbone("VGG16", "none").unwrap();
        let five = resolve_blocks(&h, &["cblock5".into()]).unwrap();
        let expected: BTreeSet<String> = ["block5_conv1", "block5_conv2", "block5_conv3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(five, expected);
        assert!(resolve_blocks(&h, &[]).unwrap().is_empty());
        match resolve_blocks(&h, &["cblock9".into()]) {
            Err(Error::UnknownBlock { name, valid }) => {
                assert_eq!(name, "cblock9");
                assert_eq!(valid.len(), 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let all = resolve_blocks(&h, &h.block_names()).unwrap();
        let union: BTreeSet<String> = h.block_map.values().flatten().cloned().collect();
        assert_eq!(all, union);
    }

    #[test]
    fn blocks_are_disjoint() {
        for name in list_backbones() {
            let h = get_backbone(&name, "none").unwrap();
            let total: usize = h.block_map.values().map(|s| s.len()).sum();
            let union: BTreeSet<&String> = h.block_map.values().flatten().collect();
            assert_eq!(total, union.len());
        }
    }

    #[test]
    fn missing_cache_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let cache = WeightCache::new(dir.path());
        let h = get_backbone_with_cache("TinyNet", "imagenet", &cache).unwrap();
        match load_weights(&h) {
            Err(Error::WeightsUnavailable { message, .. }) => {
                assert!(message.contains("weights.safetensors"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn install_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let cache = WeightCache::new(dir.path());
        let mut tensors = HashMap::new();
        tensors.insert(
            "block1_conv1.bias".to_string(),
            Tensor::new(&[1f32, 2., 3.], &Device::Cpu).unwrap(),
        );
        let path = cache.install("TinyNet", "imagenet", &tensors).unwrap();
        assert!(path.ends_with("TinyNet/imagenet/v1/weights.safetensors"));
        let h = get_backbone_with_cache("TinyNet", "imagenet", &cache).unwrap();
        let loaded = load_weights(&h).unwrap().unwrap();
        let v: Vec<f32> = loaded["block1_conv1.bias"].to_vec1().unwrap();
        assert_eq!(v, vec![1., 2., 3.]);
    }

    #[test]
    fn caffe_preprocess_swaps_and_centers() {
        let mut img = Image::filled(1, 1, [10.0, 20.0, 30.0]);
        Preprocess::Caffe.apply(&mut img);
        assert!((img.data[0] - (30.0 - 103.939)).abs() < 1e-4);
        assert!((img.data[2] - (10.0 - 123.68)).abs() < 1e-4);
        let mut img = Image::filled(1, 1, [0.0, 127.5, 255.0]);
        Preprocess::Tf.apply(&mut img);
        assert_eq!(img.data, vec![-1.0, 0.0, 1.0]);
    }
}
