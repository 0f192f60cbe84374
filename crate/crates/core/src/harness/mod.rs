//! Experiment configuration, orchestration and report emission.
//!
//! Each seed runs a training phase (teacher and student co-run over the
//! training trace, then offline epochs) followed by testing phases in which
//! every method plays a fresh testing trace against its own copy of the
//! environment.

mod config;
mod experiments;
mod pipeline;
mod report;

use std::path::PathBuf;

pub use config::ExperimentConfig;
pub use experiments::{
    corruption_from, longterm_from, overfit_from, run_corruption, run_longterm, run_overfit, run_scalability,
    train_all,
};
pub use pipeline::{evaluate, test_trace, train_seed, EvalOptions, Method, StepRecord, TrainedSeed};
pub use report::{
    emit_report, read_steps_csv, read_summary_csv, summarize, write_resolved, write_steps_csv, write_summary_csv,
    Format, Report, RunResult, ScalingRow, StepRow, SummaryRow, TrainingLog, REPORT_FILE, RESOLVED_FILE,
    STEPS_FILE, SUMMARY_FILE,
};

use crate::casformer::CasformerError;
use crate::decompose::DecomposeError;
use crate::env::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("json: {0}")]
    Json(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Decompose(#[from] DecomposeError),
    #[error(transparent)]
    Casformer(#[from] CasformerError),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            horizon: 6,
            seeds: vec![3, 4],
            warmup_probes: 10,
            heuristic_samples: 200,
            refine_iters: 5,
            offline_epochs: 1,
            model_layers: 1,
            model_dim: 8,
            model_mlp: 16,
            corruption_rates: vec![0.0, 0.3],
            ogd_sweep: vec![1, 5],
            domain_sweep: vec![2, 3],
            scalability_seeds: 1,
            ..Default::default()
        }
    }

    #[test]
    fn longterm_shape_and_dominance() {
        let c = ExperimentConfig { seeds: vec![5], ..tiny() };
        let r = run_longterm(&c).unwrap();
        assert_eq!(r.summary.len(), 4);
        assert_eq!(r.runs.len(), 4);
        for run in &r.runs {
            assert_eq!(run.steps.len(), c.horizon);
            assert!((0.0..=1.0).contains(&run.mean_acceptance));
        }
        let opt = r.cell("opt", "").unwrap().mean_acceptance;
        for m in ["nra", "rade", "casformer"] {
            assert!(opt >= r.cell(m, "").unwrap().mean_acceptance - 1e-12, "{m}");
        }
        assert_eq!(r.training[0].online_losses.len(), c.horizon);
    }

    #[test]
    fn zero_corruption_matches_longterm() {
        let c = tiny();
        let trained = train_all(&c).unwrap();
        let base = longterm_from(&c, &trained).unwrap();
        let corr = corruption_from(&c, &trained).unwrap();
        assert_eq!(corr.runs.len(), 4 * 2 * 2);
        for m in Method::ALL {
            let a: Vec<_> = base.runs_for(m.name(), "").map(|r| &r.steps).collect();
            let b: Vec<_> = corr.runs_for(m.name(), "rho=0").map(|r| &r.steps).collect();
            let strip = |v: Vec<&Vec<StepRecord>>| -> Vec<Vec<(f64, Vec<f64>)>> {
                v.into_iter().map(|s| s.iter().map(|x| (x.p_e2e, x.delays.clone())).collect()).collect()
            };
            assert_eq!(strip(a), strip(b), "{}", m.name());
        }
        let over = overfit_from(&c, &trained).unwrap();
        let frozen: Vec<f64> = c
            .ogd_sweep
            .iter()
            .map(|k| over.cell("casformer", &format!("ogd={k}")).unwrap().mean_acceptance)
            .collect();
        assert!(frozen.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn scalability_rows() {
        let r = run_scalability(&tiny()).unwrap();
        assert_eq!(r.summary.len(), 4);
        assert_eq!(r.scaling.len(), 4);
        assert!(r.scaling.iter().filter(|s| s.num_domains == 2).all(|s| s.ratio_to_smallest == 1.0));
    }
}
