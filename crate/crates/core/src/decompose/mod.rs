//! The risk-aware teacher and the reference decompositions.
//!
//! [`RadeState`] keeps one [`RiskModel`] and one [`MemoryBuffer`] per
//! domain. Each step it refreshes the models by online gradient descent,
//! draws candidate splits uniformly on the scaled simplex, and refines the
//! best one by gradient ascent on the log acceptance objective in softmax
//! coordinates. [`nra_decompose`] and [`opt_decompose`] are the even-split
//! and exhaustive ground-truth baselines.

mod assignment;
mod baselines;
pub mod buffer;
mod rade;
pub mod risk;
mod search;

pub use assignment::{Assignment, SUM_TOLERANCE};
pub use baselines::{best_candidate, composition_count, grid_units, nra_decompose, opt_decompose, GRID_BUDGET};
pub use buffer::MemoryBuffer;
pub use rade::{RadeConfig, RadeState};
pub use risk::{AcceptanceModel, GroundTruth, OgdOutcome, RiskModel, DELAY_SCALE};
pub use search::{heuristic_search, model_objective, refine, LOG_OBJECTIVE_EPS};

use crate::autodiff::AutodiffError;
use crate::env::EnvError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum DecomposeError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid assignment: {0}")]
    InvalidAssignment(String),
    #[error("expected {expected} domains, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "grid for {domains} domains at {grid_step} ms has {points} points (budget {budget}); use a coarser grid step"
    )]
    GridTooLarge { domains: usize, grid_step: f64, points: u64, budget: u64 },
}
