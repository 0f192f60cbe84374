use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use casformer_core::harness::{
    emit_report, run_corruption, run_longterm, run_overfit, run_scalability, write_resolved, ExperimentConfig, Format,
    Report,
};
use casformer_core::selftest;
use clap::{Args, Parser, Subcommand};

/// Risk-aware SLA decomposition experiments.
#[derive(Debug, Parser)]
#[command(name = "casformer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run only this seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Output format: csv, json or both.
    #[arg(long, global = true, default_value = "both")]
    format: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Average acceptance of every method over the testing horizon.
    Longterm,
    /// Testing phase under label-flip corruption of the feedback.
    Corruption,
    /// Teacher OGD step sweep next to the frozen student.
    Overfit,
    /// Per-decision latency against the number of domains.
    Scalability,
    /// Parse and check a configuration, then print it resolved.
    ValidateConfig,
    /// Gradient checks and the grid-optimum oracle comparison.
    Selftest,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => {
            if !path.exists() {
                bail!("config file not found: {}", path.display());
            }
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_summary(report: &Report) {
    println!("{:<12} {:<10} {:<10} {:>8} {:>8} {:>14}", "experiment", "method", "param", "mean", "std", "latency_us");
    for row in &report.summary {
        println!(
            "{:<12} {:<10} {:<10} {:>8.4} {:>8.4} {:>14.1}",
            row.experiment,
            row.method,
            row.param,
            row.mean_acceptance,
            row.std_acceptance,
            row.mean_latency_ns / 1e3
        );
    }
    for s in &report.scaling {
        println!("scaling {:<10} N={} ratio {:.3}", s.method, s.num_domains, s.ratio_to_smallest);
    }
}

fn write_outputs(report: &Report, config: &ExperimentConfig, dir: &Path, format: Format) -> Result<()> {
    emit_report(report, dir, format)?;
    write_resolved(config, dir)?;
    log::info!("wrote results to {}", dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let format: Format = cli.common.format.parse()?;
    match cli.command {
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::ValidateConfig => {
            let config = load_config(&cli.common)?;
            print!("{}", config.to_toml());
            return Ok(ExitCode::SUCCESS);
        }
        _ => {}
    }
    let config = load_config(&cli.common)?;
    let report = match cli.command {
        Command::Longterm => run_longterm(&config)?,
        Command::Corruption => run_corruption(&config)?,
        Command::Overfit => run_overfit(&config)?,
        Command::Scalability => run_scalability(&config)?,
        Command::ValidateConfig | Command::Selftest => unreachable!("handled above"),
    };
    write_outputs(&report, &config, &config.output_dir, format)?;
    print_summary(&report);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
