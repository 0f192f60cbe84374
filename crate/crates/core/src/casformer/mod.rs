//! Amortized student: cascaded Transformer distilled from the teacher.

mod checkpoint;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use model::{CasformerConfig, CasformerModel};
pub use train::{train_offline, train_online, OnlineTraining, TeacherStep};

use serde::{Deserialize, Serialize};

use crate::autodiff::AutodiffError;
use crate::decompose::{Assignment, DecomposeError, MemoryBuffer};
use crate::env::EnvError;
use crate::nn::NnError;

/// Tolerance on `sum(ratios) == 1`.
pub const RATIO_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum CasformerError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("at least 2 domains are required, got {0}")]
    TooFewDomains(usize),
    #[error("model has {expected} domain encoders, got {got} domains")]
    DomainCountMismatch { expected: usize, got: usize },
    #[error("budget must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("invalid ratio vector: {0}")]
    InvalidRatios(String),
    #[error("offline training needs a non-empty dataset")]
    EmptyDataset,
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-negative per-domain shares summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioVector(Vec<f64>);

impl RatioVector {
    pub fn new(ratios: Vec<f64>) -> Result<Self, CasformerError> {
        if ratios.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(CasformerError::InvalidRatios(format!("{ratios:?}")));
        }
        let total: f64 = ratios.iter().sum();
        if (total - 1.0).abs() > RATIO_TOLERANCE {
            return Err(CasformerError::InvalidRatios(format!("sum {total}")));
        }
        Ok(Self(ratios))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Per-domain delays `ratio_n * tau_e2e`.
    pub fn scale(&self, tau_e2e: f64) -> Result<Assignment, CasformerError> {
        Ok(Assignment::from_weights(&self.0, tau_e2e)?)
    }
}

/// Divides each delay by the total.
pub fn norm_sum(delays: &[f64]) -> Result<RatioVector, CasformerError> {
    if let Some(bad) = delays.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
        return Err(CasformerError::InvalidRatios(format!("non-positive entry {bad}")));
    }
    let total: f64 = delays.iter().sum();
    RatioVector::new(delays.iter().map(|d| d / total).collect())
}

/// Buffer snapshots, the budget, and the teacher's ratios for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub buffers: Vec<MemoryBuffer>,
    pub tau_e2e: f64,
    pub target: RatioVector,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_sum_examples() {
        let r = norm_sum(&[50.0, 30.0, 20.0]).unwrap();
        for (a, b) in r.as_slice().iter().zip([0.5, 0.3, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        let u = norm_sum(&[1.0, 1.0, 1.0]).unwrap();
        assert!(u.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let x = [3.0, 7.5, 1.25];
        let scaled: Vec<f64> = x.iter().map(|v| v * 13.0).collect();
        let (a, b) = (norm_sum(&x).unwrap(), norm_sum(&scaled).unwrap());
        for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((p - q).abs() < 1e-15);
        }
        assert!(norm_sum(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn scaling_ratios() {
        let r = RatioVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let a = r.scale(100.0).unwrap();
        for (x, y) in a.delays().iter().zip([50.0, 30.0, 20.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
