use serde::{Deserialize, Serialize};

use super::DecomposeError;

/// Relative tolerance on `sum(delays) == tau_e2e`.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Per-domain partial delay budgets (ms) that add up to the end-to-end budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    delays: Vec<f64>,
}

impl Assignment {
    pub fn new(delays: Vec<f64>, tau_e2e: f64) -> Result<Self, DecomposeError> {
        if let Some(bad) = delays.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(DecomposeError::InvalidAssignment(format!("non-positive delay {bad} in {delays:?}")));
        }
        let total: f64 = delays.iter().sum();
        if (total - tau_e2e).abs() > SUM_TOLERANCE * tau_e2e.abs() {
            return Err(DecomposeError::InvalidAssignment(format!(
                "delays sum to {total}, expected {tau_e2e}"
            )));
        }
        Ok(Self { delays })
    }

    /// Scales simplex weights by `tau_e2e`.
    pub fn from_weights(weights: &[f64], tau_e2e: f64) -> Result<Self, DecomposeError> {
        Self::new(weights.iter().map(|w| w * tau_e2e).collect(), tau_e2e)
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn into_delays(self) -> Vec<f64> {
        self.delays
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.delays.iter().sum()
    }
}
