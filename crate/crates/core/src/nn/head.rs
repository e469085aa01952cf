use serde::{Deserialize, Serialize};

use super::layers::{Activation, Initializer, LayerKind, LayerSpec};
use crate::config::{Bridge, ModelConfig, Regularization};
use crate::data::{OutputActivation, TaskSpec};
use crate::error::{Error, Result};

/// Batch-norm momentum and epsilon used for head normalization layers.
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;
pub const BATCH_NORM_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub dense_layers: Vec<u32>,
    pub activation: Activation,
    pub initializer: Initializer,
    pub batch_norm: bool,
    pub regularization: Regularization,
    pub l2_strength: f64,
    pub dropout_rate: f64,
    pub bridge: Bridge,
}

impl HeadSpec {
    pub fn from_config(model: &ModelConfig) -> Result<Self> {
        let activation = Activation::from_name(&model.dense_activations).ok_or_else(|| {
            Error::Config {
                section: "model".into(),
                key: "dense_activations".into(),
                message: format!("unknown activation `{}`", model.dense_activations),
            }
        })?;
        let initializer = Initializer::from_name(&model.initializer).ok_or_else(|| Error::Config {
            section: "model".into(),
            key: "initializer".into(),
            message: format!("unknown initializer `{}`", model.initializer),
        })?;
        Ok(HeadSpec {
            dense_layers: model.dense_layers.clone(),
            activation,
            initializer,
            batch_norm: model.batch_norm,
            regularization: model.regularization,
            l2_strength: model.l2_strength,
            dropout_rate: model.dropout_rate,
            bridge: model.before_dense,
        })
    }
}

/// Ordered head layers after the bridge, ending with the task output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadDescription {
    pub layers: Vec<LayerSpec>,
}

pub const OUTPUT_LAYER: &str = "predictions";

/// Per hidden width: `Dense -> [BatchNorm] -> activation -> [Dropout]`, with
/// the L2 penalty on hidden dense kernels when the mode includes it. The
/// output dense layer carries the task activation and is never followed by
/// dropout.
pub fn build_head(task: &TaskSpec, spec: &HeadSpec) -> Result<HeadDescription> {
    if spec.dense_layers.contains(&0) {
        return Err(Error::Assembly("dense widths must be positive".into()));
    }
    if !(0.0..1.0).contains(&spec.dropout_rate) {
        return Err(Error::Assembly("dropout rate must lie in [0,1)".into()));
    }
    let l2 = if spec.regularization.uses_l2() {
        spec.l2_strength
    } else {
        0.0
    };
    let mut layers = Vec::new();
    for (i, &width) in spec.dense_layers.iter().enumerate() {
        let n = i + 1;
        layers.push(LayerSpec::new(
            format!("dense_{n}"),
            LayerKind::Dense {
                units: width as usize,
                activation: None,
                initializer: spec.initializer,
                l2,
            },
        ));
        if spec.batch_norm {
            layers.push(LayerSpec::new(
                format!("batchnorm_{n}"),
                LayerKind::BatchNorm {
                    momentum: BATCH_NORM_MOMENTUM,
                    epsilon: BATCH_NORM_EPSILON,
                },
            ));
        }
        layers.push(LayerSpec::new(
            format!("activation_{n}"),
            LayerKind::Activation {
                activation: spec.activation,
            },
        ));
        if spec.regularization.uses_dropout() {
            layers.push(LayerSpec::new(
                format!("dropout_{n}"),
                LayerKind::Dropout {
                    rate: spec.dropout_rate,
                },
            ));
        }
    }
    let output_activation = match task.output_activation {
        OutputActivation::Sigmoid => Activation::Sigmoid,
        OutputActivation::Softmax => Activation::Softmax,
    };
    layers.push(LayerSpec::new(
        OUTPUT_LAYER,
        LayerKind::Dense {
            units: task.output_units,
            activation: Some(output_activation),
            initializer: spec.initializer,
            l2: 0.0,
        },
    ));
    Ok(HeadDescription { layers })
}
