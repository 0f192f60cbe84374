use rayon::prelude::*;

use super::{
    evaluate, train_seed, EvalOptions, ExperimentConfig, HarnessError, Method, Report, RunResult, ScalingRow,
    TrainedSeed, TrainingLog,
};

/// Trains every configured seed at the default domain count, in parallel.
pub fn train_all(config: &ExperimentConfig) -> Result<Vec<TrainedSeed>, HarnessError> {
    config.validate()?;
    config
        .seeds
        .par_iter()
        .map(|&seed| {
            log::info!("training seed {seed}");
            train_seed(config, config.num_domains, seed)
        })
        .collect()
}

fn training_logs(trained: &[TrainedSeed]) -> Vec<TrainingLog> {
    let mut logs: Vec<TrainingLog> = trained
        .iter()
        .map(|t| TrainingLog {
            seed: t.seed,
            num_domains: t.num_domains(),
            online_losses: t.online_losses.clone(),
            offline_losses: t.offline_losses.clone(),
            teacher_acceptance: t.teacher_acceptance.clone(),
        })
        .collect();
    logs.sort_by_key(|l| (l.num_domains, l.seed));
    logs
}

/// Evaluates `cells` (method, param label, options) for every trained seed.
fn sweep(
    config: &ExperimentConfig,
    trained: &[TrainedSeed],
    cells: &[(Method, String, EvalOptions)],
) -> Result<Vec<RunResult>, HarnessError> {
    let per_seed: Vec<Vec<RunResult>> = trained
        .par_iter()
        .map(|t| {
            cells
                .iter()
                .map(|(method, param, opts)| {
                    let steps = evaluate(config, t, *method, *opts)?;
                    Ok(RunResult::new(t.seed, method.name(), param.clone(), steps))
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_seed.into_iter().flatten().collect())
}

/// All four methods on the testing trace with clean feedback.
pub fn longterm_from(config: &ExperimentConfig, trained: &[TrainedSeed]) -> Result<Report, HarnessError> {
    let cells: Vec<_> = Method::ALL.iter().map(|m| (*m, String::new(), EvalOptions::default())).collect();
    Ok(Report::new("longterm", sweep(config, trained, &cells)?, training_logs(trained)))
}

/// All four methods at each corruption rate.
pub fn corruption_from(config: &ExperimentConfig, trained: &[TrainedSeed]) -> Result<Report, HarnessError> {
    let cells: Vec<_> = config
        .corruption_rates
        .iter()
        .flat_map(|&rate| {
            Method::ALL
                .iter()
                .map(move |m| (*m, format!("rho={rate}"), EvalOptions { corruption_rate: rate, ogd_steps: None }))
        })
        .collect();
    Ok(Report::new("corruption", sweep(config, trained, &cells)?, training_logs(trained)))
}

/// Teacher at each OGD step count next to the frozen student.
pub fn overfit_from(config: &ExperimentConfig, trained: &[TrainedSeed]) -> Result<Report, HarnessError> {
    let cells: Vec<_> = config
        .ogd_sweep
        .iter()
        .flat_map(|&steps| {
            [Method::Rade, Method::Casformer]
                .into_iter()
                .map(move |m| (m, format!("ogd={steps}"), EvalOptions { corruption_rate: 0.0, ogd_steps: Some(steps) }))
        })
        .collect();
    Ok(Report::new("overfit", sweep(config, trained, &cells)?, training_logs(trained)))
}

pub fn run_longterm(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    longterm_from(config, &train_all(config)?)
}

pub fn run_corruption(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    corruption_from(config, &train_all(config)?)
}

pub fn run_overfit(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    overfit_from(config, &train_all(config)?)
}

/// Per-decision latency of the teacher and the student for each domain
/// count. Runs sequentially so timings do not contend for cores.
pub fn run_scalability(config: &ExperimentConfig) -> Result<Report, HarnessError> {
    config.validate()?;
    let seeds: Vec<u64> = config.seeds.iter().copied().take(config.scalability_seeds).collect();
    let mut runs = Vec::new();
    let mut trained_all = Vec::new();
    for &n in &config.domain_sweep {
        for &seed in &seeds {
            log::info!("scalability: training N={n} seed {seed}");
            let trained = train_seed(config, n, seed)?;
            for method in [Method::Rade, Method::Casformer] {
                let steps = evaluate(config, &trained, method, EvalOptions::default())?;
                runs.push(RunResult::new(seed, method.name(), format!("n={n}"), steps));
            }
            trained_all.push(trained);
        }
    }
    let mut report = Report::new("scalability", runs, training_logs(&trained_all));
    report.scaling = scaling_rows(&report, &config.domain_sweep);
    Ok(report)
}

fn scaling_rows(report: &Report, domain_sweep: &[usize]) -> Vec<ScalingRow> {
    let Some(&smallest) = domain_sweep.iter().min() else { return Vec::new() };
    let mut rows = Vec::new();
    for method in [Method::Rade, Method::Casformer] {
        let base = report.cell(method.name(), &format!("n={smallest}")).map(|c| c.mean_latency_ns);
        for &n in domain_sweep {
            if let (Some(cell), Some(base)) = (report.cell(method.name(), &format!("n={n}")), base) {
                rows.push(ScalingRow {
                    method: method.name().to_string(),
                    num_domains: n,
                    mean_latency_ns: cell.mean_latency_ns,
                    ratio_to_smallest: cell.mean_latency_ns / base,
                });
            }
        }
    }
    rows
}
