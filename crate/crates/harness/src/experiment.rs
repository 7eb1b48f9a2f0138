//! Sweep and ablation runners.
//!
//! Every row is scored the same way: fit or sample the map on train rows,
//! project both splits, train a fresh probe, evaluate on test. A learned map
//! is first trained end-to-end (with its own head), then frozen and probed
//! like the others, so a zero-epoch learned row reproduces the JL row.

use rayon::prelude::*;
use subspace_core::probe::{evaluate, train_learned_projection, train_probe};
use subspace_core::projections::{fit_pca, project, sample_jl_seeded};
use subspace_core::rng::mix_seed;
use subspace_core::{
    EvalResult, LabeledDataset, Matrix, ProjectionMatrix, ProjectionMethod, TrainConfig,
};

use crate::config::{ExperimentData, SweepConfig};
use crate::error::{HarnessError, Result};
use crate::report::{ExperimentReport, ReportKind, RowMethod};

/// Per-k Gaussian seed. Rows for other `k` are unaffected by adding a `k`.
pub fn derive_jl_seed(master_seed: u64, k: usize) -> u64 {
    master_seed ^ mix_seed(k as u64)
}

/// A projection fitted on train rows. PCA carries its centring mean.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedProjection {
    pub projection: ProjectionMatrix,
    pub mean: Option<Matrix>,
}

impl FittedProjection {
    pub fn transform(&self, x: &Matrix) -> subspace_core::Result<Matrix> {
        match &self.mean {
            Some(mean) => project(&self.projection, &x.sub_row(mean)?),
            None => project(&self.projection, x),
        }
    }
}

/// One scored row together with the map that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RowOutcome {
    pub method: ProjectionMethod,
    pub k: usize,
    pub fitted: FittedProjection,
    pub eval: EvalResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub report: ExperimentReport,
    pub baseline: EvalResult,
    pub rows: Vec<RowOutcome>,
}

/// Fits the `method` map at dimension `k` from train rows only.
pub fn fit_projection(
    method: ProjectionMethod,
    k: usize,
    train: &LabeledDataset,
    master_seed: u64,
    learned_config: &TrainConfig,
) -> subspace_core::Result<FittedProjection> {
    let d = train.dim();
    match method {
        ProjectionMethod::Jl => Ok(FittedProjection {
            projection: sample_jl_seeded(derive_jl_seed(master_seed, k), d, k)?,
            mean: None,
        }),
        ProjectionMethod::Pca => {
            let fit = fit_pca(train.features(), k)?;
            Ok(FittedProjection {
                projection: fit.projection,
                mean: Some(fit.mean),
            })
        }
        ProjectionMethod::Learned => {
            let init = sample_jl_seeded(derive_jl_seed(master_seed, k), d, k)?;
            let (learned, _head) = train_learned_projection(train, &init, learned_config)?;
            Ok(FittedProjection {
                projection: learned,
                mean: None,
            })
        }
    }
}

struct RowJob {
    method: ProjectionMethod,
    k: usize,
    fit_cfg: TrainConfig,
}

fn score_row(
    job: &RowJob,
    data: &ExperimentData,
    master_seed: u64,
    probe_cfg: &TrainConfig,
) -> subspace_core::Result<RowOutcome> {
    let RowJob { method, k, .. } = *job;
    let fitted = fit_projection(method, k, &data.train, master_seed, &job.fit_cfg)?;
    let train_p = data
        .train
        .with_features(fitted.transform(data.train.features())?)?;
    let test_p = data
        .test
        .with_features(fitted.transform(data.test.features())?)?;
    let clf = train_probe(&train_p, probe_cfg)?;
    let eval = evaluate(&clf, &test_p)?;
    Ok(RowOutcome {
        method,
        k,
        fitted,
        eval,
    })
}

fn run(cfg: &SweepConfig, data: &ExperimentData, kind: ReportKind) -> Result<SweepOutcome> {
    let d = data.ambient_dim();
    if let Some(k) = cfg.target_dims.iter().find(|&&k| k == 0 || k > d) {
        return Err(HarnessError::Config(format!(
            "target dimension {k} outside 1..={d}"
        )));
    }
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    if kind == ReportKind::Ablation {
        for m in [
            ProjectionMethod::Jl,
            ProjectionMethod::Pca,
            ProjectionMethod::Learned,
        ] {
            if !methods.contains(&m) {
                return Err(HarnessError::Config(format!(
                    "ablation needs methods jl, pca and learned; {m} is missing"
                )));
            }
        }
    }

    let base_cfg = cfg.train_config(None)?;
    let baseline_clf = train_probe(&data.train, &base_cfg)?;
    let baseline = evaluate(&baseline_clf, &data.test)?;

    // Every projected row is probed with the JL settings; per-method
    // settings only drive fitting (the learned map's own training).
    let probe_cfg = cfg.train_config(Some(ProjectionMethod::Jl))?;
    let mut jobs = Vec::new();
    for k in cfg.sorted_target_dims() {
        for &method in &methods {
            let fit_cfg = cfg.train_config(Some(method))?;
            jobs.push(RowJob { method, k, fit_cfg });
        }
    }
    let rows: Vec<RowOutcome> = jobs
        .par_iter()
        .map(|job| {
            score_row(job, data, cfg.master_seed, &probe_cfg).map_err(|source| HarnessError::Row {
                method: job.method.name().to_string(),
                k: job.k,
                source,
            })
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new(
        kind,
        cfg.name.clone(),
        d,
        cfg.epsilon,
        baseline.accuracy,
        baseline.mean_loss,
    );
    for row in &rows {
        report.push(
            row.method.into(),
            row.k,
            row.eval.accuracy,
            row.eval.mean_loss,
            row.fitted.projection.seed(),
        );
    }
    Ok(SweepOutcome {
        report,
        baseline,
        rows,
    })
}

/// Baseline probe plus one row per (k, method), on already loaded data.
pub fn run_sweep_on(cfg: &SweepConfig, data: &ExperimentData) -> Result<SweepOutcome> {
    run(cfg, data, ReportKind::Sweep)
}

/// As [`run_sweep_on`], requiring JL, PCA and Learned.
pub fn run_ablation_on(cfg: &SweepConfig, data: &ExperimentData) -> Result<SweepOutcome> {
    run(cfg, data, ReportKind::Ablation)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<ExperimentReport> {
    Ok(run_sweep_on(cfg, &cfg.load_data()?)?.report)
}

pub fn run_ablation(cfg: &SweepConfig) -> Result<ExperimentReport> {
    Ok(run_ablation_on(cfg, &cfg.load_data()?)?.report)
}

impl RowOutcome {
    pub fn row_method(&self) -> RowMethod {
        self.method.into()
    }
}
