//! Mini-batch optimizers shared by the probe, the learned projection and the
//! student network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// SGD with heavy-ball momentum; weight decay is added to the gradient.
    Sgd,
    /// Adam with decoupled weight decay.
    AdamW,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    /// Ignored by AdamW.
    #[serde(default)]
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub shuffle_seed: u64,
}

impl TrainConfig {
    /// SGD preset used for the convolutional backbone probe.
    pub fn sgd_preset() -> Self {
        Self {
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-2,
            weight_decay: 5e-4,
            momentum: 0.9,
            epochs: 5,
            batch_size: 128,
            shuffle_seed: 42,
        }
    }

    /// AdamW preset for text-transformer features.
    pub fn adamw_text_preset() -> Self {
        Self {
            optimizer: OptimizerKind::AdamW,
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            momentum: 0.0,
            epochs: 3,
            batch_size: 32,
            shuffle_seed: 42,
        }
    }

    /// AdamW preset for vision-transformer features.
    pub fn adamw_vision_preset() -> Self {
        Self {
            weight_decay: 1e-4,
            ..Self::adamw_text_preset()
        }
    }

    /// Looks up a preset by name: `sgd`, `adamw-text`, `adamw-vision`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "sgd" => Some(Self::sgd_preset()),
            "adamw-text" => Some(Self::adamw_text_preset()),
            "adamw-vision" => Some(Self::adamw_vision_preset()),
            _ => None,
        }
    }

    /// Zero epochs is accepted and means "return the initialization".
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Input(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Input(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Input(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Input("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_epochs(&self, epochs: usize) -> Self {
        Self {
            epochs,
            ..self.clone()
        }
    }
}

/// Per-parameter-block optimizer state.
#[derive(Debug, Clone)]
pub(crate) struct ParamState {
    first: Vec<f64>,
    second: Vec<f64>,
    decay: bool,
}

impl ParamState {
    pub(crate) fn new(len: usize, decay: bool) -> Self {
        Self {
            first: vec![0.0; len],
            second: vec![0.0; len],
            decay,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Optimizer {
    config: TrainConfig,
    step: u64,
}

impl Optimizer {
    pub(crate) fn new(config: &TrainConfig) -> Self {
        Self {
            config: config.clone(),
            step: 0,
        }
    }

    /// Advances the step counter; call once per mini-batch before updating blocks.
    pub(crate) fn begin_step(&mut self) {
        self.step += 1;
    }

    pub(crate) fn update(&self, params: &mut [f64], grad: &[f64], state: &mut ParamState) {
        let lr = self.config.learning_rate;
        let wd = if state.decay {
            self.config.weight_decay
        } else {
            0.0
        };
        match self.config.optimizer {
            OptimizerKind::Sgd => {
                let mu = self.config.momentum;
                for ((p, &g), buf) in params.iter_mut().zip(grad).zip(&mut state.first) {
                    let g = g + wd * *p;
                    *buf = mu * *buf + g;
                    *p -= lr * *buf;
                }
            }
            OptimizerKind::AdamW => {
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut state.first)
                    .zip(&mut state.second)
                {
                    *p *= 1.0 - lr * wd;
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Deterministic mini-batch schedule: one shuffle per epoch from a single
/// generator seeded with `shuffle_seed`. The last partial batch is kept.
pub(crate) struct BatchSchedule {
    rng: crate::rng::SeededRng,
    order: Vec<usize>,
    batch_size: usize,
}

impl BatchSchedule {
    pub(crate) fn new(n: usize, config: &TrainConfig) -> Self {
        Self {
            rng: crate::rng::SeededRng::new(config.shuffle_seed),
            order: (0..n).collect(),
            batch_size: config.batch_size,
        }
    }

    pub(crate) fn next_epoch(&mut self) -> std::slice::Chunks<'_, usize> {
        self.order.sort_unstable();
        self.rng.shuffle(&mut self.order);
        self.order.chunks(self.batch_size)
    }
}
