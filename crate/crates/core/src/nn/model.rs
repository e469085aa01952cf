use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use candle_core::{Tensor, Var};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{HeadDescription, OUTPUT_LAYER};
use super::layers::{FeatureShape, Layer, LayerKind, LayerSpec};
use crate::backbone::{self, BackboneHandle, WeightSource};
use crate::config::Bridge;
use crate::data::TaskSpec;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// Which backbone layers are trainable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreezePolicy {
    pub unfreeze_blocks: Vec<String>,
    pub freeze_up_to: Option<String>,
}

/// Everything needed to rebuild a model skeleton before loading weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: String,
    pub image_size: (u32, u32),
    pub bridge: Bridge,
    pub backbone_layers: Vec<LayerSpec>,
    pub head: HeadDescription,
    pub task: TaskSpec,
    pub policy: FreezePolicy,
}

/// Backbone, bridge and head with a per-layer trainability mask.
pub struct BuiltModel {
    layers: Vec<Layer>,
    backbone: BackboneHandle,
    backbone_len: usize,
    bridge: Bridge,
    head: HeadDescription,
    task: TaskSpec,
    image_size: (u32, u32),
    trainable: BTreeMap<String, bool>,
    policy: FreezePolicy,
}

impl std::fmt::Debug for BuiltModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BuiltModel")
            .field("backbone", &self.backbone.name)
            .field("image_size", &self.image_size)
            .field("layers", &self.layer_names())
            .field("trainable", &self.trainable)
            .finish()
    }
}

fn bridge_spec(bridge: Bridge) -> LayerSpec {
    match bridge {
        Bridge::Flatten => LayerSpec::new("flatten", LayerKind::Flatten),
        Bridge::GlobalAveragePooling => {
            LayerSpec::new("global_average_pooling", LayerKind::GlobalAveragePooling)
        }
    }
}

/// Composes backbone, bridge and head. Pretrained backbone weights are read
/// from the cache here; random backbones and the head are initialized from
/// `seed`.
pub fn assemble(
    backbone: &BackboneHandle,
    head: &HeadDescription,
    bridge: Bridge,
    task: &TaskSpec,
    image_size: (u32, u32),
    seed: u64,
) -> Result<BuiltModel> {
    let model = BuiltModel::skeleton(backbone, head, bridge, task, image_size, seed)?;
    if let Some(weights) = backbone::load_weights(backbone)? {
        let source = match &backbone.weights {
            WeightSource::Cached { source, .. } => source.clone(),
            WeightSource::Random => unreachable!("random backbones have no weight file"),
        };
        for layer in &model.layers[..model.backbone_len] {
            for (name, var) in &layer.params {
                let t = weights.get(name).ok_or_else(|| Error::WeightsUnavailable {
                    backbone: backbone.name.clone(),
                    source_name: source.clone(),
                    message: format!("weight file has no tensor `{name}`"),
                })?;
                if t.dims() != var.dims() {
                    return Err(Error::Assembly(format!(
                        "pretrained tensor `{name}` has shape {:?}, expected {:?}",
                        t.dims(),
                        var.dims()
                    )));
                }
                var.set(&t.to_dtype(candle_core::DType::F32)?)?;
            }
        }
    }
    Ok(model)
}

impl BuiltModel {
    fn skeleton(
        backbone: &BackboneHandle,
        head: &HeadDescription,
        bridge: Bridge,
        task: &TaskSpec,
        image_size: (u32, u32),
        seed: u64,
    ) -> Result<Self> {
        match head.layers.last() {
            Some(LayerSpec {
                kind: LayerKind::Dense { units, .. },
                ..
            }) if *units == task.output_units => {}
            _ => {
                return Err(Error::Assembly(format!(
                    "head must end in a dense layer with {} units",
                    task.output_units
                )))
            }
        }
        let mut shape = FeatureShape::Map(image_size.0 as usize, image_size.1 as usize, 3);
        let mut layers = Vec::new();
        let mut backbone_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "backbone_init", 0));
        for spec in &backbone.layers {
            let layer = Layer::instantiate(spec.clone(), shape, &mut backbone_rng)?;
            shape = layer.output_shape;
            layers.push(layer);
        }
        if !matches!(shape, FeatureShape::Map(..)) {
            return Err(Error::Assembly("backbone must produce a 4-D feature map".into()));
        }
        let backbone_len = layers.len();
        let mut head_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "head_init", 0));
        let bridge_layer = Layer::instantiate(bridge_spec(bridge), shape, &mut head_rng)?;
        shape = bridge_layer.output_shape;
        layers.push(bridge_layer);
        for spec in &head.layers {
            let layer = Layer::instantiate(spec.clone(), shape, &mut head_rng)?;
            shape = layer.output_shape;
            layers.push(layer);
        }
        let mut names = BTreeSet::new();
        for l in &layers {
            if !names.insert(l.name().to_string()) {
                return Err(Error::Assembly(format!("duplicate layer name `{}`", l.name())));
            }
        }
        let mut model = BuiltModel {
            layers,
            backbone: backbone.clone(),
            backbone_len,
            bridge,
            head: head.clone(),
            task: task.clone(),
            image_size,
            trainable: BTreeMap::new(),
            policy: FreezePolicy::default(),
        };
        model.apply_freeze_policy(&FreezePolicy::default())?;
        Ok(model)
    }

    /// Rebuilds a model from its description with fresh variables; load
    /// weights afterwards with [`BuiltModel::load_weights`].
    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let registered = backbone::get_backbone(&spec.backbone, "none")?;
        let handle = BackboneHandle {
            layers: spec.backbone_layers.clone(),
            weights: WeightSource::Random,
            ..registered
        };
        let mut model =
            Self::skeleton(&handle, &spec.head, spec.bridge, &spec.task, spec.image_size, 0)?;
        model.apply_freeze_policy(&spec.policy)?;
        Ok(model)
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            backbone: self.backbone.name.clone(),
            image_size: self.image_size,
            bridge: self.bridge,
            backbone_layers: self.backbone.layers.clone(),
            head: self.head.clone(),
            task: self.task.clone(),
            policy: self.policy.clone(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.layers.iter().map(|l| l.name().to_string()).collect()
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name() == name)
    }

    pub fn backbone(&self) -> &BackboneHandle {
        &self.backbone
    }

    /// Number of backbone layers; the bridge sits at this index.
    pub fn backbone_len(&self) -> usize {
        self.backbone_len
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn policy(&self) -> &FreezePolicy {
        &self.policy
    }

    /// Trainability of every parameterized layer.
    pub fn trainable_mask(&self) -> &BTreeMap<String, bool> {
        &self.trainable
    }

    pub fn is_trainable(&self, layer: &str) -> bool {
        self.trainable.get(layer).copied().unwrap_or(false)
    }

    /// Backbone layers are frozen unless they belong to an unfrozen block.
    /// With `freeze_up_to`, backbone and bridge layers after the named layer
    /// become trainable, while it and earlier layers stay frozen unless an
    /// unfrozen block claims them. Head layers are always trainable.
    pub fn apply_freeze_policy(&mut self, policy: &FreezePolicy) -> Result<()> {
        let unfrozen = backbone::resolve_blocks(&self.backbone, &policy.unfreeze_blocks)?;
        let cut = match &policy.freeze_up_to {
            Some(name) => {
                let idx = self.layer_index(name).ok_or_else(|| Error::UnknownLayer(name.clone()))?;
                if idx > self.backbone_len {
                    return Err(Error::InvalidArgument(format!(
                        "freeze_up_to must name a backbone or bridge layer, `{name}` is in the head"
                    )));
                }
                Some(idx)
            }
            None => None,
        };
        let mut mask = BTreeMap::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if !layer.has_params() {
                continue;
            }
            let trainable = i > self.backbone_len
                || unfrozen.contains(layer.name())
                || matches!(cut, Some(c) if i > c);
            mask.insert(layer.name().to_string(), trainable);
        }
        self.trainable = mask;
        self.policy = policy.clone();
        Ok(())
    }

    /// Freezes the whole backbone, returning the previous policy.
    pub(crate) fn freeze_backbone(&mut self) -> FreezePolicy {
        let previous = self.policy.clone();
        for layer in &self.layers[..=self.backbone_len] {
            if let Some(v) = self.trainable.get_mut(layer.name()) {
                *v = false;
            }
        }
        previous
    }

    /// `(trainable, frozen)`; batch-norm moving statistics count as frozen.
    pub fn parameter_counts(&self) -> (usize, usize) {
        let mut trainable = 0;
        let mut frozen = 0;
        for layer in &self.layers {
            if self.is_trainable(layer.name()) {
                trainable += layer.param_count();
            } else {
                frozen += layer.param_count();
            }
            frozen += layer.state_count();
        }
        (trainable, frozen)
    }

    pub fn total_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.param_count() + l.state_count())
            .sum()
    }

    /// Variables the optimizer may update.
    pub fn trainable_vars(&self) -> Vec<(String, Var)> {
        self.layers
            .iter()
            .filter(|l| self.is_trainable(l.name()))
            .flat_map(|l| l.params.iter().cloned())
            .collect()
    }

    /// Runs layers `0..=last`. Map outputs are returned in NHWC order.
    /// With `logits`, the output layer's activation is skipped.
    pub fn forward_to(
        &self,
        images_nhwc: &Tensor,
        last: usize,
        train: bool,
        logits: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor> {
        if last >= self.layers.len() {
            return Err(Error::UnknownLayer(format!("index {last}")));
        }
        let mut x = images_nhwc.permute((0, 3, 1, 2))?.contiguous()?;
        for (i, layer) in self.layers[..=last].iter().enumerate() {
            let trainable = self.is_trainable(layer.name());
            let is_output = i == self.layers.len() - 1;
            x = if is_output && logits {
                match &layer.spec.kind {
                    LayerKind::Dense { .. } => {
                        let w = &layer.params[0].1;
                        let b = &layer.params[1].1;
                        x.matmul(w.as_tensor())?.broadcast_add(b.as_tensor())?
                    }
                    _ => unreachable!("output layer is dense"),
                }
            } else {
                layer.forward(&x, train, trainable, rng)?
            };
        }
        if x.rank() == 4 {
            x = x.permute((0, 2, 3, 1))?.contiguous()?;
        }
        Ok(x)
    }

    /// Output-layer pre-activations `(b, output_units)`.
    pub fn logits(&self, images_nhwc: &Tensor, train: bool, rng: &mut dyn RngCore) -> Result<Tensor> {
        self.forward_to(images_nhwc, self.layers.len() - 1, train, true, rng)
    }

    /// Inference-mode probabilities `(b, output_units)`.
    pub fn predict_proba(&self, images_nhwc: &Tensor) -> Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_to(images_nhwc, self.layers.len() - 1, false, false, &mut rng)
    }

    /// `Σ l2 · ||kernel||²` over dense layers with an L2 penalty.
    pub fn l2_penalty(&self) -> Result<Option<Tensor>> {
        let mut total: Option<Tensor> = None;
        for layer in &self.layers {
            if let LayerKind::Dense { l2, .. } = layer.spec.kind {
                if l2 > 0.0 {
                    let kernel = if self.is_trainable(layer.name()) {
                        layer.params[0].1.as_tensor().clone()
                    } else {
                        layer.params[0].1.as_tensor().detach()
                    };
                    let term = (kernel.sqr()?.sum_all()? * l2)?;
                    total = Some(match total {
                        Some(t) => (t + term)?,
                        None => term,
                    });
                }
            }
        }
        Ok(total)
    }

    /// Deep copy of every parameter and state tensor, keyed by name.
    pub fn weights(&self) -> Result<HashMap<String, Tensor>> {
        let mut out = HashMap::new();
        for layer in &self.layers {
            for (name, var) in layer.params.iter().chain(&layer.state) {
                out.insert(name.clone(), var.as_tensor().copy()?);
            }
        }
        Ok(out)
    }

    pub fn set_weights(&self, weights: &HashMap<String, Tensor>) -> Result<()> {
        for layer in &self.layers {
            for (name, var) in layer.params.iter().chain(&layer.state) {
                let t = weights
                    .get(name)
                    .ok_or_else(|| Error::Checkpoint(format!("weights have no tensor `{name}`")))?;
                if t.dims() != var.dims() {
                    return Err(Error::Checkpoint(format!(
                        "tensor `{name}` has shape {:?}, expected {:?}",
                        t.dims(),
                        var.dims()
                    )));
                }
                var.set(t)?;
            }
        }
        Ok(())
    }

    pub fn save_weights(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.weights()?, path)?;
        Ok(())
    }

    pub fn load_weights(&self, path: &Path) -> Result<()> {
        if !path.is_file() {
            return Err(Error::Checkpoint(format!("no weight file at {}", path.display())));
        }
        let weights = candle_core::safetensors::load(path, &candle_core::Device::Cpu)?;
        self.set_weights(&weights)
    }

    /// Architecture table: layer, output shape, parameters, trainable flag.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Model: {} + {} head ({} classes)",
            self.backbone.name,
            match self.bridge {
                Bridge::Flatten => "Flatten",
                Bridge::GlobalAveragePooling => "GlobalAveragePooling",
            },
            self.task.num_classes
        );
        let rule = "-".repeat(78);
        let _ = writeln!(s, "{rule}");
        let _ = writeln!(
            s,
            "{:<28}{:<24}{:>14}{:>12}",
            "Layer", "Output Shape", "Param #", "Trainable"
        );
        let _ = writeln!(s, "{rule}");
        for layer in &self.layers {
            let flag = if layer.has_params() {
                if self.is_trainable(layer.name()) {
                    "yes"
                } else {
                    "no"
                }
            } else {
                "-"
            };
            let _ = writeln!(
                s,
                "{:<28}{:<24}{:>14}{:>12}",
                layer.name(),
                layer.output_shape.to_string(),
                layer.param_count() + layer.state_count(),
                flag
            );
        }
        let (trainable, frozen) = self.parameter_counts();
        let _ = writeln!(s, "{rule}");
        let _ = writeln!(s, "Total params: {}", trainable + frozen);
        let _ = writeln!(s, "Trainable params: {trainable}");
        let _ = writeln!(s, "Non-trainable params: {frozen}");
        s
    }

    /// Output width of the head layer named `predictions`.
    pub fn output_units(&self) -> usize {
        debug_assert_eq!(self.layers.last().map(|l| l.name()), Some(OUTPUT_LAYER));
        self.task.output_units
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::get_backbone;
    use crate::config::Regularization;
    use crate::nn::head::{build_head, HeadSpec};
    use crate::nn::{Activation, Initializer};
    use candle_core::{DType, Device};

    fn task(k: usize) -> TaskSpec {
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        TaskSpec::from_class_names(&names).unwrap()
    }

    fn tiny(k: usize, widths: &[u32], bridge: Bridge) -> BuiltModel {
        let handle = get_backbone("TinyNet", "none").unwrap();
        let t = task(k);
        let spec = HeadSpec {
            dense_layers: widths.to_vec(),
            activation: Activation::Elu,
            initializer: Initializer::HeNormal,
            batch_norm: false,
            regularization: Regularization::None,
            l2_strength: 0.0,
            dropout_rate: 0.0,
            bridge,
        };
        let head = build_head(&t, &spec).unwrap();
        assemble(&handle, &head, bridge, &t, (32, 32), 7).unwrap()
    }

    fn random_batch(b: usize) -> Tensor {
        Tensor::randn(0f32, 1.0, (b, 32, 32, 3), &Device::Cpu).unwrap()
    }

    #[test]
    fn softmax_output_shape() {
        let m = tiny(3, &[8], Bridge::Flatten);
        let p: Vec<Vec<f32>> = m.predict_proba(&random_batch(4)).unwrap().to_vec2().unwrap();
        assert_eq!(p.len(), 4);
        for row in p {
            assert_eq!(row.len(), 3);
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sigmoid_output_in_unit_interval() {
        let m = tiny(2, &[8], Bridge::Flatten);
        let p = m.predict_proba(&random_batch(3)).unwrap();
        assert_eq!(p.dims(), &[3, 1]);
        let v: Vec<f32> = p.flatten_all().unwrap().to_vec1().unwrap();
        assert!(v.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn gap_bridge_width_equals_channels() {
        let m = tiny(3, &[8], Bridge::GlobalAveragePooling);
        let idx = m.layer_index("global_average_pooling").unwrap();
        assert_eq!(m.layers()[idx].output_shape, FeatureShape::Vector(24));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = m.forward_to(&random_batch(2), idx, false, false, &mut rng).unwrap();
        assert_eq!(out.dims(), &[2, 24]);
    }

    #[test]
    fn default_policy_freezes_backbone_only() {
        let m = tiny(3, &[8], Bridge::Flatten);
        let (trainable, frozen) = m.parameter_counts();
        assert_eq!(frozen, 11_456);
        assert_eq!(trainable, (8 * 8 * 24 * 8 + 8) + (8 * 3 + 3));
        assert!(m.is_trainable("dense_1") && m.is_trainable("predictions"));
        assert!(!m.is_trainable("block1_conv1"));
    }

    #[test]
    fn unfreeze_block_two() {
        let mut m = tiny(3, &[8], Bridge::Flatten);
        m.apply_freeze_policy(&FreezePolicy {
            unfreeze_blocks: vec!["cblock2".into()],
            freeze_up_to: None,
        })
        .unwrap();
        let per_layer: usize = m
            .layers()
            .iter()
            .filter(|l| l.name().starts_with("block2_") || l.name().starts_with("dense") || l.name() == "predictions")
            .map(|l| l.param_count())
            .sum();
        assert_eq!(m.parameter_counts().0, per_layer);
        assert_eq!(m.parameter_counts().0 + m.parameter_counts().1, m.total_parameters());
    }

    #[test]
    fn freeze_up_to_unfreezes_later_layers() {
        let mut m = tiny(3, &[8], Bridge::Flatten);
        m.apply_freeze_policy(&FreezePolicy {
            unfreeze_blocks: vec![],
            freeze_up_to: Some("block1_pool".into()),
        })
        .unwrap();
        assert!(!m.is_trainable("block1_conv2"));
        assert!(m.is_trainable("block2_conv1"));
        m.apply_freeze_policy(&FreezePolicy {
            unfreeze_blocks: vec!["cblock1".into()],
            freeze_up_to: Some("flatten".into()),
        })
        .unwrap();
        assert!(m.is_trainable("block1_conv1"));
        assert!(!m.is_trainable("block2_conv1"));
        assert!(matches!(
            m.apply_freeze_policy(&FreezePolicy {
                unfreeze_blocks: vec![],
                freeze_up_to: Some("nope".into()),
            }),
            Err(Error::UnknownLayer(_))
        ));
        assert!(m
            .apply_freeze_policy(&FreezePolicy {
                unfreeze_blocks: vec!["cblock7".into()],
                freeze_up_to: None,
            })
            .is_err());
    }

    #[test]
    fn weights_roundtrip_through_file() {
        let m = tiny(3, &[8], Bridge::Flatten);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.safetensors");
        m.save_weights(&path).unwrap();
        let other = tiny(3, &[8], Bridge::Flatten);
        // perturb then restore
        let var = &other.layers()[0].params[0].1;
        var.set(&var.as_tensor().zeros_like().unwrap()).unwrap();
        other.load_weights(&path).unwrap();
        let x = random_batch(2);
        let a: Vec<Vec<f32>> = m.predict_proba(&x).unwrap().to_vec2().unwrap();
        let b: Vec<Vec<f32>> = other.predict_proba(&x).unwrap().to_vec2().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_rebuilds_same_architecture() {
        let m = tiny(3, &[8], Bridge::Flatten);
        let rebuilt = BuiltModel::from_spec(&m.spec()).unwrap();
        assert_eq!(rebuilt.layer_names(), m.layer_names());
        rebuilt.set_weights(&m.weights().unwrap()).unwrap();
        let x = random_batch(2);
        let a = m.predict_proba(&x).unwrap().to_dtype(DType::F64).unwrap();
        let b = rebuilt.predict_proba(&x).unwrap().to_dtype(DType::F64).unwrap();
        let diff: f64 = (a - b).unwrap().abs().unwrap().sum_all().unwrap().to_scalar().unwrap();
        assert_eq!(diff, 0.0);
    }

    #[test]
    fn collapsed_feature_map_fails_assembly() {
        let handle = get_backbone("TinyNet", "none").unwrap();
        let t = task(3);
        let spec = HeadSpec {
            dense_layers: vec![4],
            activation: Activation::Relu,
            initializer: Initializer::HeNormal,
            batch_norm: false,
            regularization: Regularization::None,
            l2_strength: 0.0,
            dropout_rate: 0.0,
            bridge: Bridge::Flatten,
        };
        let head = build_head(&t, &spec).unwrap();
        assert!(matches!(
            assemble(&handle, &head, Bridge::Flatten, &t, (2, 2), 0),
            Err(Error::Assembly(_))
        ));
    }

    #[test]
    fn summary_lists_every_layer() {
        let m = tiny(3, &[8], Bridge::Flatten);
        let s = m.summary();
        for name in m.layer_names() {
            assert!(s.contains(&name), "{name}");
        }
        assert!(s.contains("Trainable params"));
    }
}
