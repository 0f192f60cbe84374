use rand::seq::SliceRandom;
use rand::Rng;

use super::{norm_sum, CasformerError, CasformerModel, TrainingSample};
use crate::decompose::{Assignment, RadeState};
use crate::env::{Environment, Trace};

/// What the teacher did at one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherStep {
    pub t: usize,
    pub tau_e2e: f64,
    pub assignment: Assignment,
    /// True E2E acceptance of the teacher's assignment.
    pub acceptance: f64,
}

#[derive(Clone, Debug, Default)]
pub struct OnlineTraining {
    /// Pre-update KL for each step.
    pub losses: Vec<f64>,
    pub dataset: Vec<TrainingSample>,
    pub teacher: Vec<TeacherStep>,
}

/// Distills the teacher online over `trace`, one student step per time step.
///
/// At each step the teacher decides on the current buffers, the student
/// takes one gradient step towards the teacher's ratios, and the teacher's
/// assignment is played against `env` to produce next step's feedback.
/// Time steps are `t_offset + 1 ..= t_offset + trace.len()`. The feedback of
/// the last step is already in the teacher's buffers on return.
pub fn train_online(
    model: &mut CasformerModel,
    rade: &mut RadeState,
    env: &mut Environment,
    trace: &Trace,
    t_offset: usize,
) -> Result<OnlineTraining, CasformerError> {
    if rade.num_domains() != model.num_domains() || env.num_domains() != model.num_domains() {
        return Err(CasformerError::DomainCountMismatch { expected: model.num_domains(), got: rade.num_domains() });
    }
    let mut out = OnlineTraining::default();
    for (i, tau) in trace.iter().enumerate() {
        let t = t_offset + i + 1;
        let snapshot = rade.buffers().to_vec();
        let assignment = rade.decide(tau)?;
        let sample = TrainingSample { buffers: snapshot, tau_e2e: tau, target: norm_sum(assignment.delays())? };
        out.losses.push(model.train_step(&sample)?);
        out.dataset.push(sample);
        let acceptance = env.e2e_acceptance(t, assignment.delays())?;
        let feedback = env.respond(t, assignment.delays())?;
        rade.push_feedback(&feedback)?;
        out.teacher.push(TeacherStep { t, tau_e2e: tau, assignment, acceptance });
    }
    Ok(out)
}

/// Shuffled passes over the recorded dataset. Returns the mean pre-update
/// loss of each epoch.
pub fn train_offline<R: Rng + ?Sized>(
    model: &mut CasformerModel,
    dataset: &[TrainingSample],
    epochs: usize,
    rng: &mut R,
) -> Result<Vec<f64>, CasformerError> {
    if dataset.is_empty() {
        return Err(CasformerError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut means = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for &i in &order {
            total += model.train_step(&dataset[i])?;
        }
        means.push(total / dataset.len() as f64);
    }
    Ok(means)
}
