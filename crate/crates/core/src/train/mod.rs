//! Loss, optimizer, dataset preparation, the training loop and gradient checks.

mod adam;
mod data;
mod gradcheck;
mod log;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::ingest::IngestError;
use crate::neuro::{NeuroError, Tensor};

pub use adam::{adam_step, AdamState};
pub use data::PreparedData;
pub use gradcheck::{compare_gradients, grad_check, GradCheckEntry, GradCheckReport, GRAD_CHECK_TOLERANCE};
pub use log::{EpochRecord, TrainLog};
pub use trainer::{predict_slots, train};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("loss diverged to {value} at epoch {epoch}, batch {batch}")]
    DivergedLoss { epoch: usize, batch: usize, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("dataset: {0}")]
    Dataset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    /// Stop after this many epochs without a validation improvement.
    pub early_stop_patience: Option<usize>,
    /// Global gradient-norm ceiling.
    pub grad_clip: Option<f64>,
    /// Trailing share of training slots held out for checkpoint selection.
    pub validation_fraction: f64,
    /// Record per-epoch wall time in the log (makes logs run-dependent).
    pub record_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.001,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 42,
            early_stop_patience: None,
            grad_clip: None,
            validation_fraction: 0.1,
            record_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        for (name, v) in [("learning_rate", self.learning_rate), ("adam_epsilon", self.adam_epsilon)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad(format!("validation_fraction must lie in [0, 1), got {}", self.validation_fraction));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad(format!("grad_clip must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// Mean of squared element differences.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64, NeuroError> {
    if pred.shape() != target.shape() {
        return Err(NeuroError::ShapeMismatch(format!("mse {:?} vs {:?}", pred.shape(), target.shape())));
    }
    let n = pred.len().max(1) as f64;
    Ok(pred.data().iter().zip(target.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_basic_cases() {
        let a = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let shifted = a.map(|v| v - 0.75);
        assert!((mse_loss(&shifted, &a).unwrap() - 0.5625).abs() < 1e-15);
        assert!(mse_loss(&a, &Tensor::zeros(&[2, 3])).is_err());
    }

    #[test]
    fn mse_matches_flat_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.random_range(1..30);
            let p: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut s = 0.0;
            for i in 0..2 * n {
                s += (p[i] - t[i]).powi(2);
            }
            let want = s / (2 * n) as f64;
            let got = mse_loss(&Tensor::matrix(n, 2, p).unwrap(), &Tensor::matrix(n, 2, t).unwrap()).unwrap();
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { grad_clip: Some(-1.0), ..Default::default() }.validate().is_err());
    }
}
