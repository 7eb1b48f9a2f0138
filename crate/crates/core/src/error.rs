use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("rank deficient: requested {requested} components, data has rank {achieved}")]
    RankDeficient { requested: usize, achieved: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
}
