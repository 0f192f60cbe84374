//! Ground-truth multi-domain admission environment.
//!
//! Domain `n` accepts a partial delay budget `tau` at step `t` with
//! probability `sigmoid(k_n * (tau - c_n(t)))`, where the threshold drifts
//! sinusoidally: `c_n(t) = c_n + a_n * sin(2*pi*t / P_n + psi_n)`.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::seeding::{stream_rng, Stream};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("domain index {index} out of range for {count} domains")]
    InvalidDomain { index: usize, count: usize },
    #[error("expected {expected} per-domain delays, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("delay must be positive and finite, got {0}")]
    InvalidDelay(f64),
    #[error("corruption rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("invalid domain parameters: {0}")]
    InvalidParams(String),
    #[error("an environment needs at least 2 domains, got {0}")]
    TooFewDomains(usize),
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    /// Sigmoid slope k, 1/ms.
    pub slope: f64,
    /// Base acceptance threshold c, ms.
    pub threshold: f64,
    /// Threshold drift amplitude a, ms.
    pub drift_amplitude: f64,
    /// Drift period P, steps.
    pub drift_period: f64,
    /// Drift phase psi, radians.
    pub drift_phase: f64,
}

impl DomainParams {
    pub fn validate(&self) -> Result<(), EnvError> {
        let ok = self.slope > 0.0
            && self.threshold > 0.0
            && self.drift_amplitude >= 0.0
            && self.drift_period >= 1.0
            && self.drift_phase.is_finite();
        if ok {
            Ok(())
        } else {
            Err(EnvError::InvalidParams(format!("{self:?}")))
        }
    }

    pub fn threshold_at(&self, t: usize) -> f64 {
        self.threshold + self.drift_amplitude * (TAU * t as f64 / self.drift_period + self.drift_phase).sin()
    }

    pub fn acceptance(&self, t: usize, tau: f64) -> f64 {
        sigmoid(self.slope * (tau - self.threshold_at(t)))
    }
}

/// Sampling ranges for randomly drawn domains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub slope: (f64, f64),
    pub threshold: (f64, f64),
    pub drift_amplitude: (f64, f64),
    pub drift_period: (f64, f64),
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            slope: (0.1, 0.5),
            threshold: (20.0, 45.0),
            drift_amplitude: (0.0, 10.0),
            drift_period: (40.0, 120.0),
        }
    }
}

impl EnvConfig {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<DomainParams> {
        fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
            if hi > lo {
                rng.gen_range(lo..hi)
            } else {
                lo
            }
        }
        (0..n)
            .map(|_| DomainParams {
                slope: draw(rng, self.slope),
                threshold: draw(rng, self.threshold),
                drift_amplitude: draw(rng, self.drift_amplitude),
                drift_period: draw(rng, self.drift_period),
                drift_phase: rng.gen_range(0.0..TAU),
            })
            .collect()
    }

    /// Same ranges with the drift switched off.
    pub fn stationary(mut self) -> Self {
        self.drift_amplitude = (0.0, 0.0);
        self
    }
}

/// One proposed partial delay and the domain's binary response.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub tau: f64,
    pub accepted: bool,
    pub t: usize,
}

impl FeedbackRecord {
    pub fn label(&self) -> f64 {
        if self.accepted {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct Environment {
    domains: Vec<DomainParams>,
    rng: ChaCha8Rng,
}

impl Environment {
    pub fn new(domains: Vec<DomainParams>, rng: ChaCha8Rng) -> Result<Self, EnvError> {
        if domains.len() < 2 {
            return Err(EnvError::TooFewDomains(domains.len()));
        }
        domains.iter().try_for_each(DomainParams::validate)?;
        Ok(Self { domains, rng })
    }

    /// Draws `n` domains from `config` using the run seed's parameter stream.
    pub fn random(n: usize, config: &EnvConfig, seed: u64) -> Result<Self, EnvError> {
        let domains = config.sample(n, &mut stream_rng(seed, Stream::EnvParams));
        Self::new(domains, stream_rng(seed, Stream::TrainFeedback))
    }

    /// Same ground truth, independent feedback stream.
    pub fn fork(&self, rng: ChaCha8Rng) -> Self {
        Self { domains: self.domains.clone(), rng }
    }

    pub fn num_domains(&self) -> usize {
        self.domains.len()
    }

    pub fn domains(&self) -> &[DomainParams] {
        &self.domains
    }

    fn domain(&self, n: usize) -> Result<&DomainParams, EnvError> {
        self.domains.get(n).ok_or(EnvError::InvalidDomain { index: n, count: self.domains.len() })
    }

    /// True acceptance probability of domain `n` (0-based) at step `t`.
    pub fn acceptance_prob(&self, n: usize, t: usize, tau: f64) -> Result<f64, EnvError> {
        let d = self.domain(n)?;
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(EnvError::InvalidDelay(tau));
        }
        Ok(d.acceptance(t, tau))
    }

    /// Product of the per-domain acceptance probabilities.
    pub fn e2e_acceptance(&self, t: usize, assignment: &[f64]) -> Result<f64, EnvError> {
        if assignment.len() != self.domains.len() {
            return Err(EnvError::LengthMismatch { expected: self.domains.len(), got: assignment.len() });
        }
        assignment
            .iter()
            .enumerate()
            .try_fold(1.0, |acc, (n, tau)| Ok(acc * self.acceptance_prob(n, t, *tau)?))
    }

    /// Bernoulli draw of domain `n`'s response to `tau`.
    pub fn sample_feedback(&mut self, n: usize, t: usize, tau: f64) -> Result<FeedbackRecord, EnvError> {
        let p = self.acceptance_prob(n, t, tau)?;
        let u: f64 = self.rng.gen();
        Ok(FeedbackRecord { tau, accepted: u < p, t })
    }

    /// One feedback record per domain for `assignment`.
    pub fn respond(&mut self, t: usize, assignment: &[f64]) -> Result<Vec<FeedbackRecord>, EnvError> {
        if assignment.len() != self.domains.len() {
            return Err(EnvError::LengthMismatch { expected: self.domains.len(), got: assignment.len() });
        }
        assignment.iter().enumerate().map(|(n, tau)| self.sample_feedback(n, t, *tau)).collect()
    }

    /// Random probes at step 0, `count` per domain, delays uniform in `[lo, hi]`.
    pub fn warmup_probes(&mut self, count: usize, lo: f64, hi: f64) -> Result<Vec<Vec<FeedbackRecord>>, EnvError> {
        if !(lo > 0.0 && lo <= hi) {
            return Err(EnvError::InvalidInterval { lo, hi });
        }
        (0..self.domains.len())
            .map(|n| {
                (0..count)
                    .map(|_| {
                        let tau = if hi > lo { self.rng.gen_range(lo..=hi) } else { lo };
                        self.sample_feedback(n, 0, tau)
                    })
                    .collect()
            })
            .collect()
    }
}

/// Flips the label with probability `rate`.
pub fn corrupt<R: Rng + ?Sized>(record: FeedbackRecord, rate: f64, rng: &mut R) -> Result<FeedbackRecord, EnvError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(EnvError::InvalidRate(rate));
    }
    let flip = rng.gen::<f64>() < rate;
    Ok(FeedbackRecord { accepted: record.accepted ^ flip, ..record })
}

/// Sequence of end-to-end delay budgets, one per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace(pub Vec<f64>);

impl Trace {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }
}

/// `len` i.i.d. budgets uniform in `[lo, hi]`.
pub fn generate_trace<R: Rng + ?Sized>(len: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Trace, EnvError> {
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(EnvError::InvalidInterval { lo, hi });
    }
    let draws = (0..len).map(|_| if hi > lo { rng.gen_range(lo..=hi) } else { lo }).collect();
    Ok(Trace(draws))
}
