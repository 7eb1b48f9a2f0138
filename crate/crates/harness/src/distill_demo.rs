//! Student-regression demo on synthetic collapse data.
//!
//! The teacher feature of each sample is its collapse embedding `h`. The
//! student never sees `h`: it gets a fixed random linear view `V h`
//! (`input_dim x d`, entries `N(0, 1/d)`) and is trained to output `P h` for
//! a frozen JL map `P`. Two probes are then compared on the test split: one on
//! `P h` itself and one on the student's outputs.

use serde::{Deserialize, Serialize};
use subspace_core::distill::{train_student, StudentNet};
use subspace_core::probe::{evaluate, train_probe};
use subspace_core::projections::{project, sample_jl_seeded};
use subspace_core::rng::{gaussian_matrix, mix_seed, SeededRng};
use subspace_core::synth::{generate_collapse_dataset, CollapseSpec};
use subspace_core::{LabeledDataset, Matrix, OptimizerKind, TrainConfig};

use crate::config::synthetic_train_config;
use crate::error::Result;
use crate::experiment::derive_jl_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillDemoConfig {
    pub data: CollapseSpec,
    pub input_dim: usize,
    pub hidden: usize,
    pub k: usize,
    pub master_seed: u64,
    pub student: TrainConfig,
    pub probe: TrainConfig,
}

impl DistillDemoConfig {
    /// Ten-class collapse data in `R^256`, a 64-wide input view, and `k = 32`.
    pub fn synthetic_default(master_seed: u64) -> Self {
        Self {
            data: CollapseSpec {
                seed: master_seed,
                ..CollapseSpec::default()
            },
            input_dim: 64,
            hidden: 128,
            k: 32,
            master_seed,
            student: TrainConfig {
                optimizer: OptimizerKind::AdamW,
                learning_rate: 1e-3,
                weight_decay: 0.0,
                momentum: 0.0,
                epochs: 60,
                batch_size: 32,
                shuffle_seed: master_seed,
            },
            probe: TrainConfig {
                shuffle_seed: master_seed,
                ..synthetic_train_config()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillDemoReport {
    pub k: usize,
    pub projection_seed: u64,
    /// Mean subspace loss of the trained student on train / test rows.
    pub train_loss: f64,
    pub test_loss: f64,
    pub teacher_probe_accuracy: f64,
    pub student_probe_accuracy: f64,
    /// `student_probe_accuracy - teacher_probe_accuracy`.
    pub delta: f64,
}

fn view_seed(master_seed: u64) -> u64 {
    mix_seed(master_seed ^ 0x5649_4557)
}

fn input_view(cfg: &DistillDemoConfig) -> Result<Matrix> {
    let d = cfg.data.ambient_dim;
    let mut rng = SeededRng::new(view_seed(cfg.master_seed));
    let g = gaussian_matrix(&mut rng, cfg.input_dim, d)?;
    let scale = 1.0 / (d as f64).sqrt();
    Ok(Matrix::new(
        cfg.input_dim,
        d,
        g.data().iter().map(|v| v * scale).collect(),
    )?)
}

fn probe_accuracy(train: &LabeledDataset, test: &LabeledDataset, cfg: &TrainConfig) -> Result<f64> {
    let clf = train_probe(train, cfg)?;
    Ok(evaluate(&clf, test)?.accuracy)
}

/// Trains the student and both probes; returns the student with the report.
pub fn run_distill_demo(cfg: &DistillDemoConfig) -> Result<(StudentNet, DistillDemoReport)> {
    let ds = generate_collapse_dataset(&cfg.data)?;
    let d = cfg.data.ambient_dim;
    let projection_seed = derive_jl_seed(cfg.master_seed, cfg.k);
    let p = sample_jl_seeded(projection_seed, d, cfg.k)?;
    let view = input_view(cfg)?;

    let inputs_train = ds.train.features().matmul_transposed(&view)?;
    let inputs_test = ds.test.features().matmul_transposed(&view)?;
    let student = train_student(
        &inputs_train,
        ds.train.features(),
        &p,
        &cfg.student,
        cfg.hidden,
    )?;

    let targets_train = project(&p, ds.train.features())?;
    let targets_test = project(&p, ds.test.features())?;
    let train_loss = student.mean_loss(&inputs_train, &targets_train)?;
    let test_loss = student.mean_loss(&inputs_test, &targets_test)?;

    let teacher_acc = probe_accuracy(
        &ds.train.with_features(targets_train)?,
        &ds.test.with_features(targets_test)?,
        &cfg.probe,
    )?;
    let student_acc = probe_accuracy(
        &ds.train
            .with_features(student.forward_batch(&inputs_train)?)?,
        &ds.test
            .with_features(student.forward_batch(&inputs_test)?)?,
        &cfg.probe,
    )?;
    let report = DistillDemoReport {
        k: cfg.k,
        projection_seed,
        train_loss,
        test_loss,
        teacher_probe_accuracy: teacher_acc,
        student_probe_accuracy: student_acc,
        delta: student_acc - teacher_acc,
    };
    Ok((student, report))
}
