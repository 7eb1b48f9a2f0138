//! Random-projection solution subspaces for frozen embeddings.
//!
//! Features `h in R^d` are mapped to `R^k` by a frozen Gaussian map
//! `(1/sqrt(k)) R`, a PCA basis, or a map trained jointly with the probe. A
//! softmax-regression probe measures how much class separability survives,
//! and a small student network can be trained to regress the projected
//! teacher features directly. [`synth`] generates neural-collapse data with
//! known geometry for checking all of the above.

pub mod dataset;
pub mod distill;
pub mod error;
pub mod matrix;
pub mod optim;
pub mod probe;
pub mod projections;
pub mod rng;
pub mod synth;

pub use dataset::{LabeledDataset, Split};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use optim::{OptimizerKind, TrainConfig};
pub use probe::{EvalResult, LinearClassifier};
pub use projections::{DistortionReport, PcaFit, ProjectionMatrix, ProjectionMethod};
pub use rng::SeededRng;
