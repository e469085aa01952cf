//! First-order optimizers with Keras-style gradient clipping.

use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};
use serde_json::Value;

use crate::error::{Error, Result};

pub const OPTIMIZERS: [&str; 3] = ["Adam", "RMSprop", "SGD"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam {
        beta_1: f64,
        beta_2: f64,
        epsilon: f64,
    },
    Sgd {
        momentum: f64,
        nesterov: bool,
    },
    RmsProp {
        rho: f64,
        momentum: f64,
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Clipping {
    /// Per-variable gradient norm bound.
    pub clipnorm: Option<f64>,
    /// Bound on the norm of all gradients taken together.
    pub global_clipnorm: Option<f64>,
    /// Element-wise bound.
    pub clipvalue: Option<f64>,
}

struct Slots {
    first: Tensor,
    second: Option<Tensor>,
}

pub struct Optimizer {
    name: String,
    kind: OptimizerKind,
    learning_rate: f64,
    clipping: Clipping,
    step: u64,
    slots: HashMap<String, Slots>,
}

impl std::fmt::Debug for Optimizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Optimizer")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("learning_rate", &self.learning_rate)
            .field("clipping", &self.clipping)
            .field("step", &self.step)
            .finish()
    }
}

fn number(optimizer: &str, key: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| {
        Error::InvalidArgument(format!("{optimizer}: parameter `{key}` must be a number"))
    })
}

fn boolean(optimizer: &str, key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| {
        Error::InvalidArgument(format!("{optimizer}: parameter `{key}` must be a boolean"))
    })
}

/// Creates an optimizer; every entry of `extra` must be understood by it.
pub fn build_optimizer(
    name: &str,
    learning_rate: f64,
    extra: &BTreeMap<String, Value>,
) -> Result<Optimizer> {
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    let mut kind = match name {
        "Adam" => OptimizerKind::Adam {
            beta_1: 0.9,
            beta_2: 0.999,
            epsilon: 1e-7,
        },
        "SGD" => OptimizerKind::Sgd {
            momentum: 0.0,
            nesterov: false,
        },
        "RMSprop" => OptimizerKind::RmsProp {
            rho: 0.9,
            momentum: 0.0,
            epsilon: 1e-7,
        },
        _ => {
            return Err(Error::UnknownOptimizer {
                name: name.to_string(),
                registered: OPTIMIZERS.iter().map(|s| s.to_string()).collect(),
            })
        }
    };
    let mut clipping = Clipping::default();
    for (key, value) in extra {
        match (key.as_str(), &mut kind) {
            ("clipnorm", _) => clipping.clipnorm = Some(number(name, key, value)?),
            ("global_clipnorm", _) => clipping.global_clipnorm = Some(number(name, key, value)?),
            ("clipvalue", _) => clipping.clipvalue = Some(number(name, key, value)?),
            ("beta_1", OptimizerKind::Adam { beta_1, .. }) => *beta_1 = number(name, key, value)?,
            ("beta_2", OptimizerKind::Adam { beta_2, .. }) => *beta_2 = number(name, key, value)?,
            ("epsilon", OptimizerKind::Adam { epsilon, .. })
            | ("epsilon", OptimizerKind::RmsProp { epsilon, .. }) => {
                *epsilon = number(name, key, value)?
            }
            ("momentum", OptimizerKind::Sgd { momentum, .. })
            | ("momentum", OptimizerKind::RmsProp { momentum, .. }) => {
                *momentum = number(name, key, value)?
            }
            ("nesterov", OptimizerKind::Sgd { nesterov, .. }) => {
                *nesterov = boolean(name, key, value)?
            }
            ("rho", OptimizerKind::RmsProp { rho, .. }) => *rho = number(name, key, value)?,
            _ => {
                return Err(Error::UnsupportedOptimizerParam {
                    optimizer: name.to_string(),
                    param: key.clone(),
                })
            }
        }
    }
    for bound in [clipping.clipnorm, clipping.global_clipnorm, clipping.clipvalue]
        .into_iter()
        .flatten()
    {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidArgument("clipping bounds must be positive".into()));
        }
    }
    Ok(Optimizer {
        name: name.to_string(),
        kind,
        learning_rate,
        clipping,
        step: 0,
        slots: HashMap::new(),
    })
}

fn l2_norm(t: &Tensor) -> Result<f64> {
    Ok(t.sqr()?.sum_all()?.to_scalar::<f32>()?.sqrt() as f64)
}

impl Optimizer {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.learning_rate = lr;
    }

    pub fn clipping(&self) -> Clipping {
        self.clipping
    }

    /// Same configuration with empty state.
    pub fn fresh(&self) -> Optimizer {
        Optimizer {
            name: self.name.clone(),
            kind: self.kind,
            learning_rate: self.learning_rate,
            clipping: self.clipping,
            step: 0,
            slots: HashMap::new(),
        }
    }

    /// Gradients after clipping, in `vars` order; variables without a
    /// gradient are skipped.
    pub fn clipped_gradients(
        &self,
        vars: &[(String, Var)],
        grads: &GradStore,
    ) -> Result<Vec<(usize, Tensor)>> {
        let mut out = Vec::new();
        for (i, (_, var)) in vars.iter().enumerate() {
            if let Some(g) = grads.get(var.as_tensor()) {
                let mut g = g.detach();
                if let Some(c) = self.clipping.clipvalue {
                    g = g.clamp(-c as f32, c as f32)?;
                }
                if let Some(c) = self.clipping.clipnorm {
                    let norm = l2_norm(&g)?;
                    if norm > c {
                        g = (g * (c / norm))?;
                    }
                }
                out.push((i, g));
            }
        }
        if let Some(c) = self.clipping.global_clipnorm {
            let mut total = 0.0;
            for (_, g) in &out {
                total += l2_norm(g)?.powi(2);
            }
            let total = total.sqrt();
            if total > c {
                for (_, g) in out.iter_mut() {
                    *g = (&*g * (c / total))?;
                }
            }
        }
        Ok(out)
    }

    pub fn step(&mut self, vars: &[(String, Var)], grads: &GradStore) -> Result<()> {
        let gradients = self.clipped_gradients(vars, grads)?;
        self.step += 1;
        let t = self.step as i32;
        let lr = self.learning_rate;
        for (i, g) in gradients {
            let (name, var) = &vars[i];
            let w = var.as_tensor().detach();
            let updated = match self.kind {
                OptimizerKind::Adam {
                    beta_1,
                    beta_2,
                    epsilon,
                } => {
                    let slot = self.slots.entry(name.clone()).or_insert_with(|| Slots {
                        first: g.zeros_like().expect("zeros"),
                        second: Some(g.zeros_like().expect("zeros")),
                    });
                    let m = ((&slot.first * beta_1)? + (&g * (1.0 - beta_1))?)?;
                    let v = ((slot.second.as_ref().expect("adam slot") * beta_2)?
                        + (g.sqr()? * (1.0 - beta_2))?)?;
                    let lr_t = lr * (1.0 - beta_2.powi(t)).sqrt() / (1.0 - beta_1.powi(t));
                    let step = (m.clone() * lr_t)?.div(&(v.sqrt()? + epsilon)?)?;
                    slot.first = m;
                    slot.second = Some(v);
                    (w - step)?
                }
                OptimizerKind::Sgd { momentum, nesterov } => {
                    if momentum == 0.0 {
                        (w - (g * lr)?)?
                    } else {
                        let slot = self.slots.entry(name.clone()).or_insert_with(|| Slots {
                            first: g.zeros_like().expect("zeros"),
                            second: None,
                        });
                        let velocity = ((&slot.first * momentum)? - (&g * lr)?)?;
                        let next = if nesterov {
                            ((w + (&velocity * momentum)?)? - (g * lr)?)?
                        } else {
                            (w + &velocity)?
                        };
                        slot.first = velocity;
                        next
                    }
                }
                OptimizerKind::RmsProp {
                    rho,
                    momentum,
                    epsilon,
                } => {
                    let slot = self.slots.entry(name.clone()).or_insert_with(|| Slots {
                        first: g.zeros_like().expect("zeros"),
                        second: Some(g.zeros_like().expect("zeros")),
                    });
                    let avg = ((&slot.first * rho)? + (g.sqr()? * (1.0 - rho))?)?;
                    let increment = (g * lr)?.div(&(avg.sqrt()? + epsilon)?)?;
                    slot.first = avg;
                    if momentum > 0.0 {
                        let mom = slot.second.as_ref().expect("rmsprop slot");
                        let mom = ((mom * momentum)? + increment)?;
                        let next = (w - &mom)?;
                        slot.second = Some(mom);
                        next
                    } else {
                        (w - increment)?
                    }
                }
            };
            var.set(&updated)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use serde_json::json;

    fn extras(v: Value) -> BTreeMap<String, Value> {
        serde_json::from_value(v).unwrap()
    }

    fn quadratic_step(opt: &mut Optimizer, start: &[f32]) -> Vec<f32> {
        let var = Var::new(start, &Device::Cpu).unwrap();
        let loss = var.as_tensor().sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        opt.step(&[("w".into(), var.clone())], &grads).unwrap();
        var.as_tensor().to_vec1().unwrap()
    }

    #[test]
    fn adam_default_learning_rate() {
        let opt = build_optimizer("Adam", 2e-5, &BTreeMap::new()).unwrap();
        assert_eq!(opt.learning_rate(), 2e-5);
        assert_eq!(opt.clipping(), Clipping::default());
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // first bias-corrected Adam step is lr * g / (|g| + eps') ~ lr * sign(g)
        let mut opt = build_optimizer("Adam", 0.1, &BTreeMap::new()).unwrap();
        let w = quadratic_step(&mut opt, &[1.0, -2.0]);
        assert!((w[0] - 0.9).abs() < 1e-5, "{w:?}");
        assert!((w[1] + 1.9).abs() < 1e-5, "{w:?}");
    }

    #[test]
    fn clipnorm_bounds_gradient() {
        let opt = build_optimizer("Adam", 1e-4, &extras(json!({"clipnorm": 0.8}))).unwrap();
        assert_eq!(opt.clipping().clipnorm, Some(0.8));

        // with plain SGD at lr 1 the update equals the clipped gradient
        let mut sgd = build_optimizer("SGD", 1.0, &extras(json!({"clipnorm": 0.8}))).unwrap();
        let w = quadratic_step(&mut sgd, &[3.0, 4.0]);
        // gradient (6, 8) has norm 10 and is rescaled to norm 0.8
        let delta = [(3.0 - w[0]) as f64, (4.0 - w[1]) as f64];
        let norm = (delta[0].powi(2) + delta[1].powi(2)).sqrt();
        assert!((norm - 0.8).abs() < 1e-5, "{norm}");
    }

    #[test]
    fn sgd_plain_step() {
        let mut sgd = build_optimizer("SGD", 0.25, &BTreeMap::new()).unwrap();
        let w = quadratic_step(&mut sgd, &[2.0]);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let mut sgd =
            build_optimizer("SGD", 0.1, &extras(json!({"momentum": 0.9}))).unwrap();
        let var = Var::new(&[1.0f32], &Device::Cpu).unwrap();
        for _ in 0..2 {
            let grads = var.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap();
            sgd.step(&[("w".into(), var.clone())], &grads).unwrap();
        }
        // v1 = -0.2, w1 = 0.8; v2 = 0.9 * -0.2 - 0.1 * 1.6 = -0.34, w2 = 0.46
        let w: Vec<f32> = var.as_tensor().to_vec1().unwrap();
        assert!((w[0] - 0.46).abs() < 1e-6, "{w:?}");
    }

    #[test]
    fn rmsprop_first_step() {
        let mut opt = build_optimizer("RMSprop", 0.01, &BTreeMap::new()).unwrap();
        let w = quadratic_step(&mut opt, &[1.0]);
        // avg = 0.1 * 4; step = 0.01 * 2 / sqrt(0.4)
        let expected = 1.0 - 0.01 * 2.0 / 0.4f64.sqrt();
        assert!((w[0] as f64 - expected).abs() < 1e-5);
    }

    #[test]
    fn unknown_optimizer() {
        match build_optimizer("Adagradzz", 1e-3, &BTreeMap::new()) {
            Err(Error::UnknownOptimizer { name, .. }) => assert_eq!(name, "Adagradzz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unsupported_extra() {
        match build_optimizer("SGD", 1e-3, &extras(json!({"beta_1": 0.5}))) {
            Err(Error::UnsupportedOptimizerParam { param, .. }) => assert_eq!(param, "beta_1"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
