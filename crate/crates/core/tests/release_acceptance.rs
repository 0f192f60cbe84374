//! End-to-end acceptance criteria. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails. Runs sequentially so latency numbers
//! are not contended.

use std::process::ExitCode;
use std::time::Instant;

use casformer_core::harness::{
    corruption_from, longterm_from, overfit_from, run_longterm, run_scalability, train_all, write_steps_csv, Report,
    TrainedSeed,
};
use casformer_core::nn::EncoderConfig;
use casformer_core::selftest::{self, END_TO_END_TOLERANCE, OP_TOLERANCE};
use casformer_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn mean_of(report: &Report, method: &str, param: &str) -> f64 {
    report.cell(method, param).unwrap_or_else(|| panic!("missing cell {method}@{param}")).mean_acceptance
}

fn latency_of(report: &Report, method: &str, param: &str) -> f64 {
    report.cell(method, param).unwrap_or_else(|| panic!("missing cell {method}@{param}")).mean_latency_ns
}

fn method_ordering(longterm: &Report) -> Outcome {
    let [nra, rade, cas, opt] = ["nra", "rade", "casformer", "opt"].map(|m| mean_of(longterm, m, ""));
    let passed =
        opt >= cas && opt >= rade && cas - nra >= 0.05 && rade - nra >= 0.05 && (cas - rade).abs() <= 0.05;
    Outcome {
        id: 1,
        name: "method ordering",
        passed,
        detail: format!("nra {nra:.4}, rade {rade:.4}, casformer {cas:.4}, opt {opt:.4}"),
    }
}

fn speedup(scaling: &Report) -> Outcome {
    let (rade, cas) = (latency_of(scaling, "rade", "n=3"), latency_of(scaling, "casformer", "n=3"));
    let factor = rade / cas;
    Outcome {
        id: 2,
        name: "speedup at N=3",
        passed: factor >= 5.0,
        detail: format!("rade {:.0} us, casformer {:.0} us, factor {factor:.2} (need >= 5)", rade / 1e3, cas / 1e3),
    }
}

fn corruption(report: &Report) -> Outcome {
    let at = |m: &str, rate: &str| mean_of(report, m, &format!("rho={rate}"));
    let (cas0, cas3, rade0, rade3) = (at("casformer", "0"), at("casformer", "0.3"), at("rade", "0"), at("rade", "0.3"));
    let passed = cas3 >= rade3 && cas3 < cas0 + 0.02 && rade3 < rade0 + 0.02;
    Outcome {
        id: 3,
        name: "corruption robustness",
        passed,
        detail: format!("rho=0: rade {rade0:.4} casformer {cas0:.4}; rho=0.3: rade {rade3:.4} casformer {cas3:.4}"),
    }
}

fn overfitting(report: &Report, sweep: &[usize]) -> Outcome {
    let rade = |k: usize| mean_of(report, "rade", &format!("ogd={k}"));
    let cas: Vec<f64> = sweep.iter().map(|k| mean_of(report, "casformer", &format!("ogd={k}"))).collect();
    let spread = cas.iter().copied().fold(f64::NEG_INFINITY, f64::max) - cas.iter().copied().fold(f64::INFINITY, f64::min);
    let (r5, r50) = (rade(5), rade(50));
    Outcome {
        id: 4,
        name: "overfitting sensitivity",
        passed: r50 < r5 && spread <= 0.02,
        detail: format!("rade ogd=5 {r5:.4}, ogd=50 {r50:.4}; casformer spread {spread:.4}"),
    }
}

fn scalability(report: &Report) -> Outcome {
    let ratio = |m: &str| latency_of(report, m, "n=4") / latency_of(report, m, "n=2");
    let (cas, rade) = (ratio("casformer"), ratio("rade"));
    Outcome {
        id: 5,
        name: "scalability shape",
        passed: cas < 1.5 && rade > cas,
        detail: format!("N=4/N=2 latency: casformer {cas:.3} (need < 1.5), rade {rade:.3}"),
    }
}

fn constraint_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for call in 0..1000 {
        let n = rng.gen_range(2..=5);
        let dim = [4, 8, 16][call % 3];
        let enc = EncoderConfig { layers: 1 + call % 2, dim, mlp: 2 * dim, heads: if dim >= 8 { 2 } else { 1 } };
        let config = CasformerConfig { num_domains: n, encoder: enc, aggregator: enc, ..Default::default() };
        let model = CasformerModel::new(config, &mut rng).expect("valid config");
        let buffers: Vec<MemoryBuffer> = (0..n)
            .map(|_| {
                let len = rng.gen_range(0..=20);
                MemoryBuffer::from_records(
                    20,
                    (0..len).map(|t| FeedbackRecord { tau: rng.gen_range(1.0..150.0), accepted: rng.gen(), t }),
                )
            })
            .collect();
        let tau = rng.gen_range(1.0..500.0);
        let delays = if call % 2 == 0 {
            model.predict(&buffers, tau).expect("predict").1.into_delays()
        } else {
            model.infer(&buffers, tau).expect("infer").into_delays()
        };
        let rel = (delays.iter().sum::<f64>() - tau).abs() / tau;
        worst = worst.max(rel);
        if rel > 1e-9 || delays.iter().any(|d| !(*d > 0.0)) {
            violations += 1;
        }
    }
    Outcome {
        id: 6,
        name: "constraint invariants",
        passed: violations == 0,
        detail: format!("1000 calls, {violations} violations, worst relative sum error {worst:.1e}"),
    }
}

fn oracle() -> Outcome {
    match selftest::oracle_suite(100, 77) {
        Ok(c) => Outcome { id: 7, name: "oracle equivalence", passed: c.passed, detail: c.detail },
        Err(e) => Outcome { id: 7, name: "oracle equivalence", passed: false, detail: e.to_string() },
    }
}

fn gradients() -> Outcome {
    let mut failed = Vec::new();
    let mut count = 0;
    match selftest::gradient_suite(11) {
        Ok(checks) => {
            count += checks.len();
            failed.extend(checks.into_iter().filter(|c| !c.passed).map(|c| format!("{}: {}", c.name, c.detail)));
        }
        Err(e) => failed.push(e.to_string()),
    }
    let e2e = selftest::casformer_gradient_check(12);
    let e2e_detail = match &e2e {
        Ok(c) => {
            count += 1;
            if !c.passed {
                failed.push(format!("{}: {}", c.name, c.detail));
            }
            c.detail.clone()
        }
        Err(e) => {
            failed.push(e.to_string());
            e.to_string()
        }
    };
    Outcome {
        id: 8,
        name: "gradient correctness",
        passed: failed.is_empty(),
        detail: format!(
            "{count} checks (ops < {OP_TOLERANCE:.0e}, end-to-end < {END_TO_END_TOLERANCE:.0e}); end-to-end {e2e_detail}; failures: {failed:?}"
        ),
    }
}

fn windowed(losses: &[f64], window: usize) -> (f64, f64) {
    let w = window.min(losses.len());
    let start = losses[..w].iter().sum::<f64>() / w as f64;
    let end = losses[losses.len() - w..].iter().sum::<f64>() / w as f64;
    (start, end)
}

fn distillation(trained: &[TrainedSeed]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let enc = EncoderConfig { layers: 1, dim: 8, mlp: 16, heads: 2 };
    let config = CasformerConfig { num_domains: 3, encoder: enc, aggregator: enc, ..Default::default() };
    let mut model = CasformerModel::new(config, &mut rng).expect("valid config");
    let buffers: Vec<MemoryBuffer> = (0..3)
        .map(|_| {
            MemoryBuffer::from_records(
                30,
                (0..30).map(|t| FeedbackRecord { tau: rng.gen_range(5.0..110.0), accepted: rng.gen(), t }),
            )
        })
        .collect();
    let sample = TrainingSample { buffers, tau_e2e: 100.0, target: RatioVector::new(vec![0.6, 0.3, 0.1]).unwrap() };
    for _ in 0..500 {
        model.train_step(&sample).expect("train step");
    }
    let kl = model.sample_loss(&sample).expect("loss");
    let decreasing = trained
        .iter()
        .filter(|t| {
            let (start, end) = windowed(&t.online_losses, 25);
            end < start
        })
        .count();
    let needed = (trained.len() * 8).div_ceil(10);
    Outcome {
        id: 9,
        name: "distillation convergence",
        passed: kl < 0.01 && decreasing >= needed,
        detail: format!(
            "single-sample KL after 500 steps {kl:.2e}; online loss decreased in {decreasing}/{} seeds",
            trained.len()
        ),
    }
}

fn metric_columns(path: &std::path::Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).expect("steps.csv");
    text.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
}

fn determinism() -> Outcome {
    let config = harness::ExperimentConfig {
        horizon: 20,
        seeds: vec![7],
        warmup_probes: 20,
        heuristic_samples: 500,
        refine_iters: 10,
        offline_epochs: 2,
        ..Default::default()
    };
    let dirs = [tempfile::tempdir().expect("tempdir"), tempfile::tempdir().expect("tempdir")];
    let mut columns = Vec::new();
    for dir in &dirs {
        let report = run_longterm(&config).expect("longterm");
        let path = dir.path().join(harness::STEPS_FILE);
        write_steps_csv(&report, &path).expect("write steps");
        columns.push(metric_columns(&path));
    }
    let identical = columns[0] == columns[1];
    Outcome {
        id: 10,
        name: "determinism",
        passed: identical && columns[0].len() > 1,
        detail: format!("{} rows per run, metric columns identical: {identical}", columns[0].len() - 1),
    }
}

fn main() -> ExitCode {
    let started = Instant::now();
    let config = harness::ExperimentConfig::default();
    let mut outcomes = Vec::new();
    let mut report = |o: Outcome| {
        println!("[{}] criterion {}: {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
        outcomes.push(o.passed);
    };

    report(constraint_suite());
    report(oracle());
    report(gradients());
    report(determinism());

    let trained = train_all(&config).expect("training");
    let longterm = longterm_from(&config, &trained).expect("longterm");
    report(method_ordering(&longterm));
    report(distillation(&trained));
    report(corruption(&corruption_from(&config, &trained).expect("corruption")));
    report(overfitting(&overfit_from(&config, &trained).expect("overfit"), &config.ogd_sweep));
    drop(trained);

    let scaling = run_scalability(&config).expect("scalability");
    report(speedup(&scaling));
    report(scalability(&scaling));

    let failed = outcomes.iter().filter(|p| !**p).count();
    println!("{} criteria, {failed} failed ({:.0} s)", outcomes.len(), started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
