use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{HarnessError, StepRecord};

/// One method played over one seed's testing trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub method: String,
    /// Sweep coordinate such as `rho=0.1`; empty when there is none.
    pub param: String,
    pub steps: Vec<StepRecord>,
    pub mean_acceptance: f64,
    pub mean_latency_ns: f64,
    pub median_latency_ns: f64,
}

impl RunResult {
    pub fn new(seed: u64, method: impl Into<String>, param: impl Into<String>, steps: Vec<StepRecord>) -> Self {
        let mean_acceptance = mean(steps.iter().map(|s| s.p_e2e));
        let mean_latency_ns = mean(steps.iter().map(|s| s.latency_ns as f64));
        let median_latency_ns = median(steps.iter().map(|s| s.latency_ns as f64).collect());
        Self { seed, method: method.into(), param: param.into(), steps, mean_acceptance, mean_latency_ns, median_latency_ns }
    }

    /// `method@param`, or just the method.
    pub fn label(&self) -> String {
        if self.param.is_empty() {
            self.method.clone()
        } else {
            format!("{}@{}", self.method, self.param)
        }
    }
}

/// Across-seed aggregate of one (method, param) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub method: String,
    pub param: String,
    pub mean_acceptance: f64,
    /// Sample standard deviation of the per-seed means.
    pub std_acceptance: f64,
    pub mean_latency_ns: f64,
    pub median_latency_ns: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub seed: u64,
    pub num_domains: usize,
    pub online_losses: Vec<f64>,
    pub offline_losses: Vec<f64>,
    pub teacher_acceptance: Vec<f64>,
}

/// Latency of one method at one domain count, relative to the smallest count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub method: String,
    pub num_domains: usize,
    pub mean_latency_ns: f64,
    pub ratio_to_smallest: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub runs: Vec<RunResult>,
    pub summary: Vec<SummaryRow>,
    pub training: Vec<TrainingLog>,
    pub scaling: Vec<ScalingRow>,
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub(crate) fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values.iter().copied());
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

impl Report {
    /// Sorts runs by seed (stable within a seed) and rebuilds the summary.
    pub fn new(experiment: impl Into<String>, mut runs: Vec<RunResult>, training: Vec<TrainingLog>) -> Self {
        let experiment = experiment.into();
        runs.sort_by_key(|r| r.seed);
        let summary = summarize(&experiment, &runs);
        Self { experiment, runs, summary, training, scaling: Vec::new() }
    }

    pub fn cell(&self, method: &str, param: &str) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.param == param)
    }

    pub fn runs_for<'a>(&'a self, method: &'a str, param: &'a str) -> impl Iterator<Item = &'a RunResult> + 'a {
        self.runs.iter().filter(move |r| r.method == method && r.param == param)
    }
}

/// Cells in order of first appearance.
pub fn summarize(experiment: &str, runs: &[RunResult]) -> Vec<SummaryRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in runs {
        if !keys.contains(&(r.method.as_str(), r.param.as_str())) {
            keys.push((&r.method, &r.param));
        }
    }
    keys.into_iter()
        .map(|(method, param)| {
            let cell: Vec<&RunResult> = runs.iter().filter(|r| r.method == method && r.param == param).collect();
            let means: Vec<f64> = cell.iter().map(|r| r.mean_acceptance).collect();
            let all_latencies = cell.iter().flat_map(|r| r.steps.iter().map(|s| s.latency_ns as f64)).collect();
            SummaryRow {
                experiment: experiment.to_string(),
                method: method.to_string(),
                param: param.to_string(),
                mean_acceptance: mean(means.iter().copied()),
                std_acceptance: sample_std(&means),
                mean_latency_ns: mean(cell.iter().map(|r| r.mean_latency_ns)),
                median_latency_ns: median(all_latencies),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl std::str::FromStr for Format {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            other => Err(HarnessError::Config(format!("unknown format `{other}` (expected csv, json or both)"))),
        }
    }
}

pub const STEPS_FILE: &str = "steps.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.json";
pub const RESOLVED_FILE: &str = "config.resolved";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_owned(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> HarnessError + '_ {
    move |e| HarnessError::Csv { path: path.to_owned(), message: e.to_string() }
}

/// Writes `steps.csv` and `summary.csv` and/or `report.json` under `dir`.
pub fn emit_report(report: &Report, dir: &Path, format: Format) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    if matches!(format, Format::Csv | Format::Both) {
        write_steps_csv(report, &dir.join(STEPS_FILE))?;
        write_summary_csv(&report.summary, &dir.join(SUMMARY_FILE))?;
    }
    if matches!(format, Format::Json | Format::Both) {
        let path = dir.join(REPORT_FILE);
        let json = serde_json::to_string_pretty(report).map_err(|e| HarnessError::Json(e.to_string()))?;
        std::fs::write(&path, json).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn write_resolved(config: &super::ExperimentConfig, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(RESOLVED_FILE);
    std::fs::write(&path, config.to_toml()).map_err(io_err(&path))
}

fn steps_header(width: usize) -> Vec<String> {
    let mut header: Vec<String> = ["seed", "t", "method", "tau_e2e"].map(String::from).to_vec();
    header.extend((1..=width).map(|i| format!("tau_{i}")));
    header.extend(["p_e2e", "latency_ns"].map(String::from));
    header
}

pub fn write_steps_csv(report: &Report, path: &Path) -> Result<(), HarnessError> {
    let width = report.runs.iter().flat_map(|r| r.steps.iter().map(|s| s.delays.len())).max().unwrap_or(0);
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(steps_header(width)).map_err(csv_err(path))?;
    for run in &report.runs {
        let label = run.label();
        for s in &run.steps {
            let mut row = vec![run.seed.to_string(), s.t.to_string(), label.clone(), s.tau_e2e.to_string()];
            row.extend((0..width).map(|i| s.delays.get(i).map(f64::to_string).unwrap_or_default()));
            row.push(s.p_e2e.to_string());
            row.push(s.latency_ns.to_string());
            w.write_record(&row).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    // serialize() skips the header when there are no rows.
    w.write_record([
        "experiment",
        "method",
        "param",
        "mean_acceptance",
        "std_acceptance",
        "mean_latency_ns",
        "median_latency_ns",
    ])
    .map_err(csv_err(path))?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.method.clone(),
            r.param.clone(),
            r.mean_acceptance.to_string(),
            r.std_acceptance.to_string(),
            r.mean_latency_ns.to_string(),
            r.median_latency_ns.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    let mut inner = w.into_inner().map_err(|e| HarnessError::Csv { path: path.to_owned(), message: e.to_string() })?;
    inner.flush().map_err(io_err(path))
}

/// A parsed `steps.csv` row.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRow {
    pub seed: u64,
    pub t: usize,
    pub method: String,
    pub tau_e2e: f64,
    pub delays: Vec<f64>,
    pub p_e2e: f64,
    pub latency_ns: u64,
}

pub fn read_steps_csv(path: &Path) -> Result<Vec<StepRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let bad = |what: &str| HarnessError::Csv { path: path.to_owned(), message: format!("bad {what}") };
    let width = r.headers().map_err(csv_err(path))?.len().saturating_sub(6);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let field = |i: usize| rec.get(i).ok_or_else(|| bad("row width"));
        let delays = (0..width)
            .map(|i| field(4 + i))
            .filter(|f| !matches!(f, Ok("")))
            .map(|f| f.and_then(|v| v.parse().map_err(|_| bad("delay"))))
            .collect::<Result<_, _>>()?;
        rows.push(StepRow {
            seed: field(0)?.parse().map_err(|_| bad("seed"))?,
            t: field(1)?.parse().map_err(|_| bad("t"))?,
            method: field(2)?.to_string(),
            tau_e2e: field(3)?.parse().map_err(|_| bad("tau_e2e"))?,
            delays,
            p_e2e: field(4 + width)?.parse().map_err(|_| bad("p_e2e"))?,
            latency_ns: field(5 + width)?.parse().map_err(|_| bad("latency_ns"))?,
        });
    }
    Ok(rows)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<_, _>>().map_err(csv_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(t: usize, p: f64, n: usize) -> StepRecord {
        StepRecord { t, tau_e2e: 100.0, delays: vec![100.0 / n as f64; n], p_e2e: p, latency_ns: 1000 + t as u64 }
    }

    fn sample_report() -> Report {
        let runs = vec![
            RunResult::new(1, "rade", "", vec![step(1, 0.5, 3), step(2, 0.7, 3)]),
            RunResult::new(0, "rade", "", vec![step(1, 0.2, 3), step(2, 0.4, 3)]),
            RunResult::new(0, "casformer", "n=2", vec![step(1, 1.0 / 3.0, 2)]),
        ];
        Report::new("longterm", runs, Vec::new())
    }

    #[test]
    fn summary_statistics() {
        let r = sample_report();
        assert_eq!(r.runs[0].seed, 0);
        let cell = r.cell("rade", "").unwrap();
        assert!((cell.mean_acceptance - 0.45).abs() < 1e-12);
        // per-seed means 0.3 and 0.6
        assert!((cell.std_acceptance - (0.045f64).sqrt()).abs() < 1e-12);
        assert_eq!(r.summary.len(), 2);
        assert_eq!(median(vec![3.0, 1.0, 2.0, 10.0]), 2.5);
    }

    #[test]
    fn empty_report_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&Report::new("longterm", Vec::new(), Vec::new()), dir.path(), Format::Csv).unwrap();
        let steps = std::fs::read_to_string(dir.path().join(STEPS_FILE)).unwrap();
        assert_eq!(steps, "seed,t,method,tau_e2e,p_e2e,latency_ns\n");
        let summary = std::fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 1);
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let r = sample_report();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path(), Format::Both).unwrap();
        let rows = read_steps_csv(&dir.path().join(STEPS_FILE)).unwrap();
        let flat: Vec<(u64, String, &StepRecord)> =
            r.runs.iter().flat_map(|run| run.steps.iter().map(move |s| (run.seed, run.label(), s))).collect();
        assert_eq!(rows.len(), flat.len());
        for (row, (seed, label, s)) in rows.iter().zip(flat) {
            assert_eq!((row.seed, &row.method, row.t), (seed, &label, s.t));
            assert_eq!(row.delays, s.delays);
            assert_eq!(row.p_e2e, s.p_e2e);
            assert_eq!(row.latency_ns, s.latency_ns);
        }
        assert_eq!(read_summary_csv(&dir.path().join(SUMMARY_FILE)).unwrap(), r.summary);
        let json = std::fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap();
        assert_eq!(serde_json::from_str::<Report>(&json).unwrap(), r);
    }

    #[test]
    fn unwritable_directory_fails() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, "x").unwrap();
        assert!(emit_report(&sample_report(), &file.join("sub"), Format::Csv).is_err());
    }
}
