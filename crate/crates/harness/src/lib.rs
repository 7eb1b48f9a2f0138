//! Experiment harness: configuration, embedding files, sweep and ablation
//! runners, the distillation demo, and report rendering.

pub mod config;
pub mod coords;
pub mod distill_demo;
pub mod emb1;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{DataSource, ExperimentData, SweepConfig, TrainSpec};
pub use error::{HarnessError, Result};
pub use experiment::{run_ablation, run_sweep};
pub use report::{emit_report, ExperimentReport, ReportFormat};
