//! TOML experiment configuration.
//!
//! ```toml
//! name = "synthetic-collapse"
//! master_seed = 42            # default 42
//! epsilon = 0.05              # validity tolerance on mean test loss
//! target_dims = [128, 64, 32]
//! methods = ["jl", "pca", "learned"]
//!
//! [data]
//! source = "synthetic"        # or "files" with `train` / `test` paths
//! num_classes = 10
//! ambient_dim = 256
//! samples_per_class = 100
//! within_class_sigma = 0.05
//! mean_radius = 1.0
//!
//! [train]                     # probe settings for the baseline, JL and PCA
//! preset = "sgd"              # "sgd", "adamw-text" or "adamw-vision"
//! epochs = 20                 # any field overrides the preset
//!
//! [train_overrides.learned]   # optional per-method settings
//! learning_rate = 0.005
//! ```
//!
//! Unset seeds (data seed, shuffle seeds) default to `master_seed`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use subspace_core::synth::{generate_collapse_dataset, CollapseSpec};
use subspace_core::{LabeledDataset, Matrix, OptimizerKind, ProjectionMethod, Split, TrainConfig};

use crate::emb1::{load_csv, load_embeddings};
use crate::error::{HarnessError, Result};

pub const DEFAULT_MASTER_SEED: u64 = 42;

fn default_seed() -> u64 {
    DEFAULT_MASTER_SEED
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_methods() -> Vec<ProjectionMethod> {
    vec![ProjectionMethod::Jl]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub master_seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub target_dims: Vec<usize>,
    #[serde(default = "default_methods")]
    pub methods: Vec<ProjectionMethod>,
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub train_overrides: BTreeMap<ProjectionMethod, TrainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        num_classes: usize,
        ambient_dim: usize,
        samples_per_class: usize,
        within_class_sigma: f64,
        mean_radius: f64,
        seed: Option<u64>,
    },
    /// EMB1 files, or CSV fixtures when the path ends in `.csv`.
    Files { train: PathBuf, test: PathBuf },
}

/// Probe training settings: an optional named preset plus field overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub preset: Option<String>,
    pub optimizer: Option<OptimizerKind>,
    pub learning_rate: Option<f64>,
    pub weight_decay: Option<f64>,
    pub momentum: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub shuffle_seed: Option<u64>,
}

impl TrainSpec {
    /// Resolves to a concrete config. Without a preset the base is
    /// [`synthetic_train_config`].
    pub fn resolve(&self, master_seed: u64) -> Result<TrainConfig> {
        let mut cfg = match &self.preset {
            Some(name) => TrainConfig::preset(name)
                .ok_or_else(|| HarnessError::Config(format!("unknown train preset {name:?}")))?,
            None => synthetic_train_config(),
        };
        cfg.shuffle_seed = master_seed;
        if let Some(v) = self.optimizer {
            cfg.optimizer = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = self.momentum {
            cfg.momentum = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.shuffle_seed {
            cfg.shuffle_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fields set in `other` win over fields set here.
    fn overlay(&self, other: &TrainSpec) -> TrainSpec {
        TrainSpec {
            preset: other.preset.clone().or_else(|| self.preset.clone()),
            optimizer: other.optimizer.or(self.optimizer),
            learning_rate: other.learning_rate.or(self.learning_rate),
            weight_decay: other.weight_decay.or(self.weight_decay),
            momentum: other.momentum.or(self.momentum),
            epochs: other.epochs.or(self.epochs),
            batch_size: other.batch_size.or(self.batch_size),
            shuffle_seed: other.shuffle_seed.or(self.shuffle_seed),
        }
    }
}

/// Probe settings for the desk-scale synthetic experiments: SGD with momentum
/// 0.9 and the SGD preset's weight decay. The learning rate is ten times the
/// preset's so the test loss settles within 30 epochs on ~1000 samples.
pub fn synthetic_train_config() -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e-1,
        weight_decay: 5e-4,
        momentum: 0.9,
        epochs: 30,
        batch_size: 32,
        shuffle_seed: DEFAULT_MASTER_SEED,
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SweepConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate_static()?;
        Ok(cfg)
    }

    /// Reads a config; relative data paths resolve against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let DataSource::Files { train, test } = &mut cfg.data {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Default synthetic experiment: ten-class collapse data in `R^256`.
    pub fn synthetic_default() -> Self {
        let spec = CollapseSpec::default();
        Self {
            name: "synthetic-collapse".into(),
            master_seed: DEFAULT_MASTER_SEED,
            epsilon: default_epsilon(),
            target_dims: vec![128, 64, 32],
            methods: default_methods(),
            data: DataSource::Synthetic {
                num_classes: spec.num_classes,
                ambient_dim: spec.ambient_dim,
                samples_per_class: spec.samples_per_class,
                within_class_sigma: spec.within_class_sigma,
                mean_radius: spec.mean_radius,
                seed: None,
            },
            train: TrainSpec::default(),
            train_overrides: BTreeMap::new(),
        }
    }

    fn validate_static(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(HarnessError::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if let Some(k) = self.target_dims.iter().find(|&&k| k == 0) {
            return Err(HarnessError::Config(format!(
                "target dimension {k} must be >= 1"
            )));
        }
        if let DataSource::Synthetic { ambient_dim, .. } = self.data {
            if let Some(k) = self.target_dims.iter().find(|&&k| k > ambient_dim) {
                return Err(HarnessError::Config(format!(
                    "target dimension {k} exceeds ambient dimension {ambient_dim}"
                )));
            }
        }
        self.train.resolve(self.master_seed)?;
        for method in self.train_overrides.keys() {
            self.train_config(Some(*method))?;
        }
        Ok(())
    }

    /// Training settings for the baseline (`None`) or one projection method.
    pub fn train_config(&self, method: Option<ProjectionMethod>) -> Result<TrainConfig> {
        match method.and_then(|m| self.train_overrides.get(&m)) {
            Some(o) => self.train.overlay(o).resolve(self.master_seed),
            None => self.train.resolve(self.master_seed),
        }
    }

    /// Target dims in report order: descending, duplicates removed.
    pub fn sorted_target_dims(&self) -> Vec<usize> {
        let mut dims = self.target_dims.clone();
        dims.sort_unstable_by(|a, b| b.cmp(a));
        dims.dedup();
        dims
    }

    pub fn collapse_spec(&self) -> Option<CollapseSpec> {
        match self.data {
            DataSource::Synthetic {
                num_classes,
                ambient_dim,
                samples_per_class,
                within_class_sigma,
                mean_radius,
                seed,
            } => Some(CollapseSpec {
                num_classes,
                ambient_dim,
                samples_per_class,
                within_class_sigma,
                mean_radius,
                seed: seed.unwrap_or(self.master_seed),
            }),
            DataSource::Files { .. } => None,
        }
    }

    pub fn load_data(&self) -> Result<ExperimentData> {
        match &self.data {
            DataSource::Synthetic { .. } => {
                let spec = self.collapse_spec().expect("synthetic source");
                let ds = generate_collapse_dataset(&spec)?;
                Ok(ExperimentData {
                    train: ds.train,
                    test: ds.test,
                    means: Some(ds.means),
                })
            }
            DataSource::Files { train, test } => {
                let load = |p: &Path, split| {
                    if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                        load_csv(p, split, None)
                    } else {
                        load_embeddings(p, split)
                    }
                };
                let train = load(train, Split::Train)?;
                let test = load(test, Split::Test)?;
                ExperimentData::new(train, test)
            }
        }
    }
}

/// Train and test splits sharing feature width and class count.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    /// Class means, when the data is synthetic.
    pub means: Option<Matrix>,
}

impl ExperimentData {
    pub fn new(train: LabeledDataset, test: LabeledDataset) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(HarnessError::Config(format!(
                "train has d = {}, test has d = {}",
                train.dim(),
                test.dim()
            )));
        }
        if train.num_classes() != test.num_classes() {
            return Err(HarnessError::Config(format!(
                "train has C = {}, test has C = {}",
                train.num_classes(),
                test.num_classes()
            )));
        }
        Ok(Self {
            train,
            test,
            means: None,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.train.dim()
    }
}
