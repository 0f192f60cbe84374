use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{heuristic_search, refine, Assignment, DecomposeError, MemoryBuffer, OgdOutcome, RiskModel};
use crate::autodiff::AdamWConfig;
use crate::env::FeedbackRecord;
use crate::seeding::{substream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadeConfig {
    pub buffer_capacity: usize,
    pub hidden: usize,
    /// Gradient steps per time step.
    pub ogd_steps: usize,
    pub ogd_lr: f64,
    pub weight_decay: f64,
    pub heuristic_samples: usize,
    pub refine_iters: usize,
    pub refine_step: f64,
}

impl Default for RadeConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: super::buffer::DEFAULT_CAPACITY,
            hidden: super::risk::DEFAULT_HIDDEN,
            ogd_steps: 5,
            ogd_lr: 0.01,
            weight_decay: 0.01,
            heuristic_samples: 10_000,
            refine_iters: 50,
            refine_step: 0.05,
        }
    }
}

impl RadeConfig {
    pub fn validate(&self) -> Result<(), DecomposeError> {
        if self.heuristic_samples == 0 || self.buffer_capacity == 0 || self.hidden == 0 {
            return Err(DecomposeError::InvalidConfig(format!("{self:?}")));
        }
        if !(self.ogd_lr >= 0.0 && self.refine_step > 0.0) {
            return Err(DecomposeError::InvalidConfig(format!("{self:?}")));
        }
        Ok(())
    }
}

/// The risk-aware teacher: per-domain risk models over FIFO buffers,
/// updated online, decomposing budgets by search plus refinement.
#[derive(Clone, Debug)]
pub struct RadeState {
    pub config: RadeConfig,
    models: Vec<RiskModel>,
    buffers: Vec<MemoryBuffer>,
    rng: ChaCha8Rng,
}

impl RadeState {
    /// Risk models are initialized from `seed`; `search_rng` drives the
    /// heuristic candidate sampling.
    pub fn new(n: usize, config: RadeConfig, seed: u64, search_rng: ChaCha8Rng) -> Result<Self, DecomposeError> {
        config.validate()?;
        let opt = AdamWConfig { lr: config.ogd_lr, weight_decay: config.weight_decay, ..Default::default() };
        let models = (0..n)
            .map(|i| RiskModel::new(config.hidden, opt, &mut substream_rng(seed, Stream::RiskInit, i as u64)))
            .collect();
        let buffers = vec![MemoryBuffer::new(config.buffer_capacity); n];
        Ok(Self { config, models, buffers, rng: search_rng })
    }

    pub fn num_domains(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[RiskModel] {
        &self.models
    }

    pub fn buffers(&self) -> &[MemoryBuffer] {
        &self.buffers
    }

    pub fn replace_buffers(&mut self, buffers: Vec<MemoryBuffer>) -> Result<(), DecomposeError> {
        if buffers.len() != self.models.len() {
            return Err(DecomposeError::LengthMismatch { expected: self.models.len(), got: buffers.len() });
        }
        self.buffers = buffers;
        Ok(())
    }

    pub fn set_search_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// One new record per domain; an empty slice is allowed (nothing new).
    pub fn push_feedback(&mut self, records: &[FeedbackRecord]) -> Result<(), DecomposeError> {
        if records.is_empty() {
            return Ok(());
        }
        if records.len() != self.buffers.len() {
            return Err(DecomposeError::LengthMismatch { expected: self.buffers.len(), got: records.len() });
        }
        self.buffers.iter_mut().zip(records).for_each(|(b, r)| b.push(*r));
        Ok(())
    }

    /// OGD on every domain's buffer.
    pub fn update_models(&mut self) -> Result<Vec<OgdOutcome>, DecomposeError> {
        let (steps, lr) = (self.config.ogd_steps, self.config.ogd_lr);
        self.models
            .iter_mut()
            .zip(&self.buffers)
            .map(|(m, b)| m.ogd_update(b, steps, lr))
            .collect()
    }

    /// Search then refine with the current models, no updates.
    pub fn optimize(&mut self, tau_e2e: f64) -> Result<Assignment, DecomposeError> {
        let init = heuristic_search(&self.models, tau_e2e, self.config.heuristic_samples, &mut self.rng)?;
        refine(&self.models, tau_e2e, &init, self.config.refine_iters, self.config.refine_step)
    }

    /// Model update followed by optimization on the already-filled buffers.
    pub fn decide(&mut self, tau_e2e: f64) -> Result<Assignment, DecomposeError> {
        self.update_models()?;
        self.optimize(tau_e2e)
    }

    /// Full teacher step: buffer update, OGD, search, refinement.
    pub fn rade_step(&mut self, feedback: &[FeedbackRecord], tau_e2e: f64) -> Result<Assignment, DecomposeError> {
        self.push_feedback(feedback)?;
        self.decide(tau_e2e)
    }
}
