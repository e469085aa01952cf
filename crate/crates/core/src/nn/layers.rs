use candle_core::{DType, Device, Tensor, Var, D};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Elu,
    Selu,
    Gelu,
    Tanh,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub const NAMES: [&'static str; 8] = [
        "relu", "elu", "selu", "gelu", "tanh", "sigmoid", "softmax", "linear",
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "relu" => Activation::Relu,
            "elu" => Activation::Elu,
            "selu" => Activation::Selu,
            "gelu" => Activation::Gelu,
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "softmax" => Activation::Softmax,
            "linear" => Activation::Linear,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Elu => "elu",
            Activation::Selu => "selu",
            Activation::Gelu => "gelu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        }
    }

    pub fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Activation::Relu => x.relu()?,
            Activation::Elu => x.elu(1.0)?,
            Activation::Selu => (x.elu(1.673_263_242_354_377_3)? * 1.050_700_987_355_480_5)?,
            Activation::Gelu => x.gelu_erf()?,
            Activation::Tanh => x.tanh()?,
            Activation::Sigmoid => sigmoid(x)?,
            Activation::Softmax => softmax_last(x)?,
            Activation::Linear => x.clone(),
        })
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub fn log_softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?;
    let shifted = x.broadcast_sub(&max)?;
    let lse = shifted.exp()?.sum_keepdim(D::Minus1)?.log()?;
    Ok(shifted.broadcast_sub(&lse)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    HeNormal,
    HeUniform,
    GlorotNormal,
    GlorotUniform,
    LecunNormal,
    RandomNormal,
    Zeros,
}

impl Initializer {
    pub const NAMES: [&'static str; 7] = [
        "he_normal",
        "he_uniform",
        "glorot_normal",
        "glorot_uniform",
        "lecun_normal",
        "random_normal",
        "zeros",
    ];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "he_normal" => Initializer::HeNormal,
            "he_uniform" => Initializer::HeUniform,
            "glorot_normal" | "xavier_normal" => Initializer::GlorotNormal,
            "glorot_uniform" | "xavier_uniform" => Initializer::GlorotUniform,
            "lecun_normal" => Initializer::LecunNormal,
            "random_normal" => Initializer::RandomNormal,
            "zeros" => Initializer::Zeros,
            _ => return None,
        })
    }

    /// Samples `n` values for a kernel with the given fan-in and fan-out.
    pub fn sample(self, n: usize, fan_in: usize, fan_out: usize, rng: &mut dyn RngCore) -> Vec<f32> {
        let fan_in = fan_in.max(1) as f64;
        let fan_out = fan_out.max(1) as f64;
        match self {
            Initializer::HeNormal => truncated_normal(n, (2.0 / fan_in).sqrt(), rng),
            Initializer::LecunNormal => truncated_normal(n, (1.0 / fan_in).sqrt(), rng),
            Initializer::GlorotNormal => truncated_normal(n, (2.0 / (fan_in + fan_out)).sqrt(), rng),
            Initializer::HeUniform => uniform(n, (6.0 / fan_in).sqrt(), rng),
            Initializer::GlorotUniform => uniform(n, (6.0 / (fan_in + fan_out)).sqrt(), rng),
            Initializer::RandomNormal => {
                let normal = Normal::new(0.0, 0.05).expect("valid std");
                (0..n).map(|_| normal.sample(rng) as f32).collect()
            }
            Initializer::Zeros => vec![0.0; n],
        }
    }
}

// Keras-style truncated normal: redraw outside two standard deviations, with
// the scale corrected for the truncation.
fn truncated_normal(n: usize, std: f64, rng: &mut dyn RngCore) -> Vec<f32> {
    let std = std / 0.879_625_661_034_239_8;
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    (0..n)
        .map(|_| loop {
            let z: f64 = normal.sample(rng);
            if z.abs() <= 2.0 {
                break (z * std) as f32;
            }
        })
        .collect()
}

fn uniform(n: usize, limit: f64, rng: &mut dyn RngCore) -> Vec<f32> {
    (0..n)
        .map(|_| rng.random_range(-limit..=limit) as f32)
        .collect()
}

/// Serializable layer description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    /// Stride 1, `same` padding, odd kernel size.
    Conv2d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
    GlobalAveragePooling,
    Dense {
        units: usize,
        activation: Option<Activation>,
        initializer: Initializer,
        l2: f64,
    },
    BatchNorm {
        momentum: f64,
        epsilon: f64,
    },
    Activation {
        activation: Activation,
    },
    Dropout {
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Activation shape without the batch dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureShape {
    /// `(height, width, channels)`
    Map(usize, usize, usize),
    Vector(usize),
}

impl FeatureShape {
    pub fn flat_len(self) -> usize {
        match self {
            FeatureShape::Map(h, w, c) => h * w * c,
            FeatureShape::Vector(n) => n,
        }
    }
}

impl std::fmt::Display for FeatureShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeatureShape::Map(h, w, c) => write!(f, "(None, {h}, {w}, {c})"),
            FeatureShape::Vector(n) => write!(f, "(None, {n})"),
        }
    }
}

impl LayerKind {
    pub fn output_shape(&self, input: FeatureShape) -> Result<FeatureShape> {
        use FeatureShape::*;
        let mismatch = |what: &str| {
            Err(Error::Assembly(format!(
                "{what} cannot follow an input of shape {input}"
            )))
        };
        match (self, input) {
            (LayerKind::Conv2d { filters, .. }, Map(h, w, _)) => Ok(Map(h, w, *filters)),
            (LayerKind::Conv2d { .. }, _) => mismatch("conv2d"),
            (LayerKind::MaxPool { size }, Map(h, w, c)) => {
                if h / size == 0 || w / size == 0 {
                    Err(Error::Assembly(format!(
                        "pooling collapses a {h}x{w} feature map to zero size"
                    )))
                } else {
                    Ok(Map(h / size, w / size, c))
                }
            }
            (LayerKind::MaxPool { .. }, _) => mismatch("max pooling"),
            (LayerKind::Flatten, Map(h, w, c)) => Ok(Vector(h * w * c)),
            (LayerKind::Flatten, Vector(n)) => Ok(Vector(n)),
            (LayerKind::GlobalAveragePooling, Map(_, _, c)) => Ok(Vector(c)),
            (LayerKind::GlobalAveragePooling, _) => mismatch("global average pooling"),
            (LayerKind::Dense { units, .. }, Vector(_)) => Ok(Vector(*units)),
            (LayerKind::Dense { .. }, _) => mismatch("dense"),
            (LayerKind::BatchNorm { .. }, Vector(n)) => Ok(Vector(n)),
            (LayerKind::BatchNorm { .. }, _) => mismatch("batch normalization"),
            (LayerKind::Activation { .. }, s) | (LayerKind::Dropout { .. }, s) => Ok(s),
        }
    }

    /// Trainable parameter count for the given input shape.
    pub fn param_count(&self, input: FeatureShape) -> usize {
        match (self, input) {
            (LayerKind::Conv2d { filters, kernel, .. }, FeatureShape::Map(_, _, c)) => {
                kernel * kernel * c * filters + filters
            }
            (LayerKind::Dense { units, .. }, FeatureShape::Vector(n)) => n * units + units,
            (LayerKind::BatchNorm { .. }, FeatureShape::Vector(n)) => 2 * n,
            _ => 0,
        }
    }

    /// Non-trainable state (batch-norm moving statistics).
    pub fn state_count(&self, input: FeatureShape) -> usize {
        match (self, input) {
            (LayerKind::BatchNorm { .. }, FeatureShape::Vector(n)) => 2 * n,
            _ => 0,
        }
    }
}

/// A layer with its variables.
#[derive(Debug, Clone)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input_shape: FeatureShape,
    pub output_shape: FeatureShape,
    /// Learnable variables, named `<layer>.<kind>`.
    pub params: Vec<(String, Var)>,
    /// Moving statistics, updated in training mode but never by an optimizer.
    pub state: Vec<(String, Var)>,
}

fn var_from(values: Vec<f32>, shape: &[usize]) -> Result<Var> {
    Ok(Var::from_tensor(&Tensor::from_vec(
        values,
        shape,
        &Device::Cpu,
    )?)?)
}

impl Layer {
    /// Instantiates variables; conv kernels use the glorot-uniform default
    /// and dense kernels their configured initializer.
    pub fn instantiate(spec: LayerSpec, input: FeatureShape, rng: &mut dyn RngCore) -> Result<Layer> {
        let output = spec.kind.output_shape(input)?;
        let name = spec.name.clone();
        let mut params = Vec::new();
        let mut state = Vec::new();
        match (&spec.kind, input) {
            (LayerKind::Conv2d { filters, kernel, .. }, FeatureShape::Map(_, _, c)) => {
                if kernel % 2 == 0 {
                    return Err(Error::Assembly(format!("{name}: kernel size must be odd")));
                }
                let n = filters * c * kernel * kernel;
                let w = Initializer::GlorotUniform.sample(
                    n,
                    c * kernel * kernel,
                    filters * kernel * kernel,
                    rng,
                );
                params.push((format!("{name}.kernel"), var_from(w, &[*filters, c, *kernel, *kernel])?));
                params.push((format!("{name}.bias"), var_from(vec![0.0; *filters], &[*filters])?));
            }
            (LayerKind::Dense { units, initializer, .. }, FeatureShape::Vector(n)) => {
                let w = initializer.sample(n * units, n, *units, rng);
                params.push((format!("{name}.kernel"), var_from(w, &[n, *units])?));
                params.push((format!("{name}.bias"), var_from(vec![0.0; *units], &[*units])?));
            }
            (LayerKind::BatchNorm { .. }, FeatureShape::Vector(n)) => {
                params.push((format!("{name}.gamma"), var_from(vec![1.0; n], &[n])?));
                params.push((format!("{name}.beta"), var_from(vec![0.0; n], &[n])?));
                state.push((format!("{name}.moving_mean"), var_from(vec![0.0; n], &[n])?));
                state.push((format!("{name}.moving_variance"), var_from(vec![1.0; n], &[n])?));
            }
            _ => {}
        }
        Ok(Layer {
            spec,
            input_shape: input,
            output_shape: output,
            params,
            state,
        })
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn has_params(&self) -> bool {
        !self.params.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn state_count(&self) -> usize {
        self.state.iter().map(|(_, v)| v.elem_count()).sum()
    }

    fn param(&self, i: usize, trainable: bool) -> Tensor {
        let t = self.params[i].1.as_tensor();
        if trainable {
            t.clone()
        } else {
            t.detach()
        }
    }

    /// Forward pass. Map inputs are NCHW; frozen layers use detached weights
    /// so no gradient is recorded for them.
    pub fn forward(
        &self,
        x: &Tensor,
        train: bool,
        trainable: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor> {
        match &self.spec.kind {
            LayerKind::Conv2d {
                kernel, activation, ..
            } => {
                let w = self.param(0, trainable);
                let b = self.param(1, trainable);
                let y = x.conv2d(&w, kernel / 2, 1, 1, 1)?;
                let y = y.broadcast_add(&b.reshape((1, b.dim(0)?, 1, 1))?)?;
                activation.apply(&y)
            }
            LayerKind::MaxPool { size } => Ok(x.max_pool2d(*size)?),
            LayerKind::Flatten => {
                if x.rank() == 4 {
                    Ok(x.permute((0, 2, 3, 1))?.flatten_from(1)?)
                } else {
                    Ok(x.clone())
                }
            }
            LayerKind::GlobalAveragePooling => Ok(x.mean((2, 3))?),
            LayerKind::Dense { activation, .. } => {
                let w = self.param(0, trainable);
                let b = self.param(1, trainable);
                let y = x.matmul(&w)?.broadcast_add(&b)?;
                match activation {
                    Some(a) => a.apply(&y),
                    None => Ok(y),
                }
            }
            LayerKind::BatchNorm { momentum, epsilon } => {
                let gamma = self.param(0, trainable);
                let beta = self.param(1, trainable);
                let moving_mean = self.state[0].1.as_tensor();
                let moving_var = self.state[1].1.as_tensor();
                let (mean, var) = if train {
                    let mean = x.mean_keepdim(0)?;
                    let centered = x.broadcast_sub(&mean)?;
                    let var = centered.sqr()?.mean_keepdim(0)?;
                    let (mean, var) = (mean.squeeze(0)?, var.squeeze(0)?);
                    if trainable {
                        let m = *momentum;
                        let new_mean = ((moving_mean * m)? + (mean.detach() * (1.0 - m))?)?;
                        let new_var = ((moving_var * m)? + (var.detach() * (1.0 - m))?)?;
                        self.state[0].1.set(&new_mean)?;
                        self.state[1].1.set(&new_var)?;
                    }
                    (mean, var)
                } else {
                    (moving_mean.detach(), moving_var.detach())
                };
                let normed = x
                    .broadcast_sub(&mean)?
                    .broadcast_div(&(var + *epsilon)?.sqrt()?)?;
                Ok(normed.broadcast_mul(&gamma)?.broadcast_add(&beta)?)
            }
            LayerKind::Activation { activation } => activation.apply(x),
            LayerKind::Dropout { rate } => {
                if !train || *rate <= 0.0 {
                    return Ok(x.clone());
                }
                let keep = 1.0 - *rate;
                let scale = (1.0 / keep) as f32;
                let mask: Vec<f32> = (0..x.elem_count())
                    .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
                    .collect();
                let mask = Tensor::from_vec(mask, x.shape(), x.device())?.to_dtype(DType::F32)?;
                Ok(x.mul(&mask)?)
            }
        }
    }
}
