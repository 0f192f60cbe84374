use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::casformer::{train_offline, train_online, CasformerModel};
use crate::decompose::{nra_decompose, opt_decompose, Assignment, MemoryBuffer, RadeState};
use crate::env::{corrupt, generate_trace, Environment, Trace};
use crate::seeding::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Nra,
    Rade,
    Casformer,
    Opt,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Nra, Method::Rade, Method::Casformer, Method::Opt];

    pub fn name(self) -> &'static str {
        match self {
            Method::Nra => "nra",
            Method::Rade => "rade",
            Method::Casformer => "casformer",
            Method::Opt => "opt",
        }
    }
}

/// A seed's environment, teacher and student after the training phase.
#[derive(Clone, Debug)]
pub struct TrainedSeed {
    pub seed: u64,
    pub env: Environment,
    pub rade: RadeState,
    pub student: CasformerModel,
    pub online_losses: Vec<f64>,
    pub offline_losses: Vec<f64>,
    /// True acceptance of the teacher's choices during training.
    pub teacher_acceptance: Vec<f64>,
}

impl TrainedSeed {
    pub fn num_domains(&self) -> usize {
        self.env.num_domains()
    }
}

/// Warm-up, online co-training over the training trace, then offline epochs.
pub fn train_seed(config: &ExperimentConfig, num_domains: usize, seed: u64) -> Result<TrainedSeed, HarnessError> {
    let mut env = Environment::random(num_domains, &config.env_config(), seed)?;
    let mut rade = RadeState::new(num_domains, config.rade_config(), seed, stream_rng(seed, Stream::TeacherSearch))?;
    let warm = env.warmup_probes(config.warmup_probes, config.warmup_lo, config.warmup_hi)?;
    let buffers = warm
        .into_iter()
        .map(|recs| MemoryBuffer::from_records(config.buffer_capacity, recs))
        .collect();
    rade.replace_buffers(buffers)?;

    let mut student = CasformerModel::new(config.casformer_config(num_domains), &mut stream_rng(seed, Stream::StudentInit))?;
    let trace = generate_trace(config.horizon, config.budget_lo, config.budget_hi, &mut stream_rng(seed, Stream::TrainTrace))?;
    let online = train_online(&mut student, &mut rade, &mut env, &trace, 0)?;
    let offline_losses = if config.offline_epochs > 0 {
        train_offline(&mut student, &online.dataset, config.offline_epochs, &mut stream_rng(seed, Stream::Shuffle))?
    } else {
        Vec::new()
    };
    log::debug!(
        "seed {seed} N={num_domains}: online KL {:.4} -> {:.4}, offline {:?}",
        online.losses.first().copied().unwrap_or(f64::NAN),
        online.losses.last().copied().unwrap_or(f64::NAN),
        offline_losses.last()
    );
    Ok(TrainedSeed {
        seed,
        env,
        rade,
        student,
        online_losses: online.losses,
        offline_losses,
        teacher_acceptance: online.teacher.iter().map(|s| s.acceptance).collect(),
    })
}

pub fn test_trace(config: &ExperimentConfig, seed: u64) -> Result<Trace, HarnessError> {
    Ok(generate_trace(config.horizon, config.budget_lo, config.budget_hi, &mut stream_rng(seed, Stream::TestTrace))?)
}

/// Test-phase knobs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EvalOptions {
    /// Label flip rate applied to records entering the buffers.
    pub corruption_rate: f64,
    /// Overrides the teacher's OGD steps per decision.
    pub ogd_steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub tau_e2e: f64,
    pub delays: Vec<f64>,
    pub p_e2e: f64,
    pub latency_ns: u64,
}

enum Decider<'a> {
    Nra,
    Rade(Box<RadeState>),
    Casformer(&'a CasformerModel, Vec<MemoryBuffer>),
    Opt(f64),
}

/// Plays `method` over a fresh testing trace. The student is frozen; the
/// teacher keeps learning from its own feedback. Each method gets its own
/// copy of the end-of-training buffers and its own feedback stream with
/// the same seed.
pub fn evaluate(
    config: &ExperimentConfig,
    trained: &TrainedSeed,
    method: Method,
    opts: EvalOptions,
) -> Result<Vec<StepRecord>, HarnessError> {
    let seed = trained.seed;
    let n = trained.num_domains();
    let trace = test_trace(config, seed)?;
    let mut env = trained.env.fork(stream_rng(seed, Stream::TestFeedback));
    let mut flips = stream_rng(seed, Stream::Corruption);
    let start_buffers = trained.rade.buffers().to_vec();

    let mut decider = match method {
        Method::Nra => Decider::Nra,
        Method::Opt => Decider::Opt(config.grid_step_for(n)),
        Method::Casformer => Decider::Casformer(&trained.student, start_buffers),
        Method::Rade => {
            let mut rade = trained.rade.clone();
            rade.set_search_rng(stream_rng(seed, Stream::EvalSearch));
            if let Some(steps) = opts.ogd_steps {
                rade.config.ogd_steps = steps;
            }
            Decider::Rade(Box::new(rade))
        }
    };

    let mut out = Vec::with_capacity(trace.len());
    for (i, tau) in trace.iter().enumerate() {
        let t = config.horizon + i + 1;
        let started = Instant::now();
        let assignment: Assignment = match &mut decider {
            Decider::Nra => nra_decompose(tau, n)?,
            Decider::Rade(rade) => rade.decide(tau)?,
            Decider::Casformer(model, buffers) => model.infer(buffers, tau)?,
            Decider::Opt(step) => opt_decompose(&env, t, tau, *step)?,
        };
        let latency_ns = started.elapsed().as_nanos() as u64;

        let p_e2e = env.e2e_acceptance(t, assignment.delays())?;
        let feedback = env
            .respond(t, assignment.delays())?
            .into_iter()
            .map(|r| corrupt(r, opts.corruption_rate, &mut flips))
            .collect::<Result<Vec<_>, _>>()?;
        match &mut decider {
            Decider::Rade(rade) => rade.push_feedback(&feedback)?,
            Decider::Casformer(_, buffers) => buffers.iter_mut().zip(feedback).for_each(|(b, r)| b.push(r)),
            Decider::Nra | Decider::Opt(_) => {}
        }
        out.push(StepRecord { t, tau_e2e: tau, delays: assignment.into_delays(), p_e2e, latency_ns });
    }
    Ok(out)
}
