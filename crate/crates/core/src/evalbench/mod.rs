//! Metrics, baselines and the planted-structure benchmark.

mod baselines;
mod metrics;
mod report;
mod synthetic;

use thiserror::Error;

use crate::graph::GraphError;
use crate::ingest::IngestError;
use crate::neuro::NeuroError;
use crate::train::TrainError;

pub use baselines::{
    evaluate_model, ols_baseline, ols_fit, ols_predictions, persistence_predictions, Evaluated, ModelKind, OlsFit, RIDGE_FALLBACK,
};
pub use metrics::{mse, r_squared, rmse};
pub use report::{Comparison, Metrics, MetricsReport, Space, StationMetrics};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need more samples (got {0})")]
    TooShort(usize),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("shape: {0}")]
    Shape(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl From<NeuroError> for EvalError {
    fn from(e: NeuroError) -> Self {
        EvalError::Train(TrainError::Neuro(e))
    }
}
