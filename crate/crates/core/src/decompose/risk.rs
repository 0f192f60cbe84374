use rand::Rng;

use super::{DecomposeError, MemoryBuffer};
use crate::autodiff::{sigmoid, AdamW, AdamWConfig, Bound, ParamStore, Tape, Tensor, Var};
use crate::env::DomainParams;
use crate::nn::{bce_loss, Linear};

/// Delays are divided by this before entering any network.
pub const DELAY_SCALE: f64 = 110.0;

pub const DEFAULT_HIDDEN: usize = 32;

/// Anything that can score a partial delay with an acceptance probability.
pub trait AcceptanceModel {
    fn prob(&self, tau: f64) -> f64;

    /// Probability and its derivative with respect to `tau`.
    fn prob_and_grad(&self, tau: f64) -> (f64, f64);

    fn prob_batch(&self, taus: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(taus.iter().map(|t| self.prob(*t)));
    }
}

/// Ground-truth acceptance of one domain frozen at step `t`.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruth {
    pub params: DomainParams,
    pub t: usize,
}

impl AcceptanceModel for GroundTruth {
    fn prob(&self, tau: f64) -> f64 {
        self.params.acceptance(self.t, tau)
    }

    fn prob_and_grad(&self, tau: f64) -> (f64, f64) {
        let p = self.prob(tau);
        (p, self.params.slope * p * (1.0 - p))
    }
}

/// Outcome of an online update of one risk model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OgdOutcome {
    /// Nothing to learn from; parameters untouched.
    EmptyBuffer,
    /// `loss` is the buffer BCE seen by the last gradient step (or the
    /// current loss when `steps == 0`).
    Trained { steps: usize, loss: f64 },
}

/// Per-domain MLP `1 -> hidden (ReLU) -> hidden (ReLU) -> 1 (sigmoid)` on
/// the normalized delay.
#[derive(Clone, Debug)]
pub struct RiskModel {
    params: ParamStore,
    l1: Linear,
    l2: Linear,
    l3: Linear,
    optimizer: AdamW,
}

impl RiskModel {
    pub fn new<R: Rng + ?Sized>(hidden: usize, optimizer: AdamWConfig, rng: &mut R) -> Self {
        let mut params = ParamStore::new();
        let l1 = Linear::new(&mut params, "risk.l1", 1, hidden, true, rng);
        let l2 = Linear::new(&mut params, "risk.l2", hidden, hidden, true, rng);
        let l3 = Linear::new(&mut params, "risk.l3", hidden, 1, true, rng);
        let optimizer = AdamW::new(optimizer, &params);
        Self { params, l1, l2, l3, optimizer }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn hidden(&self) -> usize {
        self.l1.fan_out
    }

    /// Tape forward over a batch of delays; output shape `[batch, 1]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, taus: &[f64]) -> Result<Var, DecomposeError> {
        let x = Tensor::matrix(taus.len(), 1, taus.iter().map(|t| t / DELAY_SCALE).collect())?;
        let x = tape.constant(x)?;
        let h = self.l1.forward(tape, bound, x)?;
        let h = tape.relu(h)?;
        let h = self.l2.forward(tape, bound, h)?;
        let h = tape.relu(h)?;
        let z = self.l3.forward(tape, bound, h)?;
        Ok(tape.sigmoid(z)?)
    }

    fn weights(&self) -> [&[f64]; 6] {
        let p = |id| self.params.get(id).data();
        [
            p(self.l1.weight),
            p(self.l1.bias.expect("risk layers have bias")),
            p(self.l2.weight),
            p(self.l2.bias.expect("risk layers have bias")),
            p(self.l3.weight),
            p(self.l3.bias.expect("risk layers have bias")),
        ]
    }

    /// Second hidden layer activations for input `x` (normalized), plus the
    /// first layer's, written into the scratch buffers.
    fn hidden_activations(&self, x: f64, h1: &mut [f64], h2: &mut [f64]) {
        let [w1, b1, w2, b2, _, _] = self.weights();
        let hidden = h1.len();
        for j in 0..hidden {
            h1[j] = (w1[j] * x + b1[j]).max(0.0);
        }
        h2.copy_from_slice(b2);
        for (i, &a) in h1.iter().enumerate() {
            if a > 0.0 {
                for (o, w) in h2.iter_mut().zip(&w2[i * hidden..(i + 1) * hidden]) {
                    *o += a * w;
                }
            }
        }
        h2.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    fn logit(&self, h2: &[f64]) -> f64 {
        let [_, _, _, _, w3, b3] = self.weights();
        b3[0] + h2.iter().zip(w3).map(|(a, w)| a * w).sum::<f64>()
    }

    /// Tape loss on the buffer, without updating anything.
    pub fn buffer_loss(&self, buffer: &MemoryBuffer) -> Result<Option<f64>, DecomposeError> {
        if buffer.is_empty() {
            return Ok(None);
        }
        let taus: Vec<f64> = buffer.iter().map(|r| r.tau).collect();
        let labels: Vec<f64> = buffer.iter().map(|r| r.label()).collect();
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let f = self.forward(&mut tape, &bound, &taus)?;
        Ok(Some(bce_loss(&mut tape, f, &labels)?.value))
    }

    /// `steps` full-buffer AdamW steps on mean BCE at learning rate `lr`.
    pub fn ogd_update(&mut self, buffer: &MemoryBuffer, steps: usize, lr: f64) -> Result<OgdOutcome, DecomposeError> {
        if buffer.is_empty() {
            log::debug!("risk model update skipped: empty buffer");
            return Ok(OgdOutcome::EmptyBuffer);
        }
        if steps == 0 {
            let loss = self.buffer_loss(buffer)?.expect("buffer is non-empty");
            return Ok(OgdOutcome::Trained { steps, loss });
        }
        self.optimizer.config.lr = lr;
        let taus: Vec<f64> = buffer.iter().map(|r| r.tau).collect();
        let labels: Vec<f64> = buffer.iter().map(|r| r.label()).collect();
        let mut loss = f64::NAN;
        for _ in 0..steps {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape)?;
            let f = self.forward(&mut tape, &bound, &taus)?;
            let l = bce_loss(&mut tape, f, &labels)?;
            loss = l.value;
            tape.backward(l.var)?;
            let grads = self.params.grads(&tape, &bound);
            self.optimizer.step(&mut self.params, &grads)?;
        }
        Ok(OgdOutcome::Trained { steps, loss })
    }
}

impl AcceptanceModel for RiskModel {
    fn prob(&self, tau: f64) -> f64 {
        let hidden = self.hidden();
        let mut h1 = vec![0.0; hidden];
        let mut h2 = vec![0.0; hidden];
        self.hidden_activations(tau / DELAY_SCALE, &mut h1, &mut h2);
        sigmoid(self.logit(&h2))
    }

    fn prob_and_grad(&self, tau: f64) -> (f64, f64) {
        let [w1, _, w2, _, w3, _] = self.weights();
        let hidden = self.hidden();
        let mut h1 = vec![0.0; hidden];
        let mut h2 = vec![0.0; hidden];
        self.hidden_activations(tau / DELAY_SCALE, &mut h1, &mut h2);
        let p = sigmoid(self.logit(&h2));
        // d logit / d h1_i = sum_j [h2_j > 0] w3_j w2_ij
        let mut dlogit_dx = 0.0;
        for i in 0..hidden {
            if h1[i] <= 0.0 {
                continue;
            }
            let row = &w2[i * hidden..(i + 1) * hidden];
            let through: f64 = (0..hidden).filter(|&j| h2[j] > 0.0).map(|j| w3[j] * row[j]).sum();
            dlogit_dx += through * w1[i];
        }
        (p, p * (1.0 - p) * dlogit_dx / DELAY_SCALE)
    }

    fn prob_batch(&self, taus: &[f64], out: &mut Vec<f64>) {
        let hidden = self.hidden();
        let mut h1 = vec![0.0; hidden];
        let mut h2 = vec![0.0; hidden];
        out.clear();
        out.reserve(taus.len());
        for &tau in taus {
            self.hidden_activations(tau / DELAY_SCALE, &mut h1, &mut h2);
            out.push(sigmoid(self.logit(&h2)));
        }
    }
}
