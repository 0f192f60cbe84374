//! Risk-aware SLA decomposition: an online teacher that learns per-domain
//! acceptance models and optimizes delay splits, and a cascaded Transformer
//! student distilled from it that decomposes budgets in one forward pass.
//!
//! Built on a small in-crate reverse-mode autodiff engine ([`autodiff`])
//! and Transformer building blocks ([`nn`]). [`env`] simulates the domains,
//! [`decompose`] holds the teacher and baselines, [`casformer`] the student,
//! and [`harness`] the experiments.

pub mod autodiff;
pub mod casformer;
pub mod decompose;
pub mod env;
pub mod harness;
pub mod nn;
pub mod seeding;
pub mod selftest;

pub use casformer::{norm_sum, CasformerConfig, CasformerError, CasformerModel, RatioVector, TrainingSample};
pub use decompose::{
    nra_decompose, opt_decompose, Assignment, DecomposeError, MemoryBuffer, RadeConfig, RadeState, RiskModel,
};
pub use env::{DomainParams, EnvConfig, EnvError, Environment, FeedbackRecord, Trace};
pub use harness::{ExperimentConfig, Format, HarnessError, Method, Report, RunResult};
