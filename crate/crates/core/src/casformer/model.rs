use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CasformerError, RatioVector, TrainingSample};
use crate::autodiff::{softmax_rows, AdamW, AdamWConfig, Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::decompose::{Assignment, MemoryBuffer, DELAY_SCALE};
use crate::env::FeedbackRecord;
use crate::nn::{kl_div, mean_pool, positional_encoding, EncoderConfig, EncoderStack, Linear};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CasformerConfig {
    pub num_domains: usize,
    /// Layer-1 per-domain feedback encoders.
    pub encoder: EncoderConfig,
    /// Layer-2 cross-domain aggregator; must share the encoder hidden size.
    pub aggregator: EncoderConfig,
    /// Recency positions on the Layer-1 record tokens.
    pub positional_encoding: bool,
    pub optimizer: AdamWConfig,
}

impl Default for CasformerConfig {
    fn default() -> Self {
        Self {
            num_domains: 3,
            encoder: EncoderConfig::default(),
            aggregator: EncoderConfig::default(),
            positional_encoding: true,
            optimizer: AdamWConfig::default(),
        }
    }
}

impl CasformerConfig {
    pub fn validate(&self) -> Result<(), CasformerError> {
        if self.num_domains < 2 {
            return Err(CasformerError::TooFewDomains(self.num_domains));
        }
        self.encoder.validate()?;
        self.aggregator.validate()?;
        if self.encoder.dim != self.aggregator.dim {
            return Err(CasformerError::Config(format!(
                "encoder hidden size {} differs from aggregator hidden size {}",
                self.encoder.dim, self.aggregator.dim
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim
    }
}

/// Cascaded Transformer student.
///
/// Layer 1 turns each domain's buffer into an embedding `h_n`; the budget
/// embedding `W_tau * tau_e2e / 110` is added to every `h_n`; Layer 2
/// attends across domains; a shared linear head gives one logit per domain
/// and a softmax turns them into delay ratios.
#[derive(Clone, Debug)]
pub struct CasformerModel {
    config: CasformerConfig,
    params: ParamStore,
    record_embed: Linear,
    encoders: Vec<EncoderStack>,
    aggregator: EncoderStack,
    budget_proj: ParamId,
    head: Linear,
    null_token: ParamId,
    optimizer: AdamW,
}

impl CasformerModel {
    pub fn new<R: Rng + ?Sized>(config: CasformerConfig, rng: &mut R) -> Result<Self, CasformerError> {
        config.validate()?;
        let d = config.dim();
        let mut params = ParamStore::new();
        let record_embed = Linear::new(&mut params, "embed", 2, d, true, rng);
        let encoders = (0..config.num_domains)
            .map(|n| EncoderStack::new(&mut params, &format!("encoder{n}"), config.encoder, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let aggregator = EncoderStack::new(&mut params, "aggregator", config.aggregator, rng)?;
        let budget_proj = params.add_uniform("budget_proj", &[d], 1, rng);
        // No bias: a shared offset on every logit cancels in the softmax.
        let head = Linear::new(&mut params, "head", d, 1, false, rng);
        let null_token = params.add_uniform("null_token", &[1, d], 1, rng);
        let optimizer = AdamW::new(config.optimizer, &params);
        Ok(Self { config, params, record_embed, encoders, aggregator, budget_proj, head, null_token, optimizer })
    }

    pub fn config(&self) -> &CasformerConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn num_domains(&self) -> usize {
        self.config.num_domains
    }

    pub fn encoders(&self) -> &[EncoderStack] {
        &self.encoders
    }

    pub(crate) fn replace_params(&mut self, params: ParamStore) {
        self.optimizer = AdamW::new(self.config.optimizer, &params);
        self.params = params;
    }

    /// Token for one record at recency `position` (0 = most recent).
    pub fn encode_record(&self, record: &FeedbackRecord, position: usize) -> Result<Tensor, CasformerError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let tokens = self.record_tokens(&mut tape, &bound, std::iter::repeat(record).take(position + 1))?;
        let row = tape.slice(tokens, 0, position, position + 1)?;
        let row = tape.reshape(row, &[self.config.dim()])?;
        Ok(tape.value(row).clone())
    }

    /// `[len, d]` tokens for records given most recent first.
    fn record_tokens<'a>(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        records: impl Iterator<Item = &'a FeedbackRecord>,
    ) -> Result<Var, CasformerError> {
        let features: Vec<f64> = records.flat_map(|r| [r.tau / DELAY_SCALE, r.label()]).collect();
        let len = features.len() / 2;
        let x = tape.constant(Tensor::matrix(len, 2, features)?)?;
        let tokens = self.record_embed.forward(tape, bound, x)?;
        if self.config.positional_encoding {
            let pe = tape.constant(positional_encoding(len, self.config.dim()))?;
            Ok(tape.add(tokens, pe)?)
        } else {
            Ok(tokens)
        }
    }

    /// Layer-1 embedding `h_n` of domain `n`'s buffer, shape `[d]`.
    pub fn encode_domain(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        n: usize,
        buffer: &MemoryBuffer,
    ) -> Result<Var, CasformerError> {
        let encoder = self
            .encoders
            .get(n)
            .ok_or(CasformerError::DomainCountMismatch { expected: self.encoders.len(), got: n + 1 })?;
        let tokens = if buffer.is_empty() {
            bound.var(self.null_token)
        } else {
            self.record_tokens(tape, bound, buffer.recent_first())?
        };
        let encoded = encoder.forward(tape, bound, tokens)?;
        Ok(mean_pool(tape, encoded)?)
    }

    /// Layer 2 plus head over `[N, d]` domain embeddings. Returns the ratio
    /// vector `[N]`. Works for any `N >= 1` with the same parameters.
    pub fn aggregate(&self, tape: &mut Tape, bound: &Bound, embeddings: Var, tau_e2e: f64) -> Result<Var, CasformerError> {
        let budget = tape.scale(bound.var(self.budget_proj), tau_e2e / DELAY_SCALE)?;
        let conditioned = tape.add(embeddings, budget)?;
        let mixed = self.aggregator.forward(tape, bound, conditioned)?;
        let logits = self.head.forward(tape, bound, mixed)?;
        let n = tape.shape(logits)[0];
        let logits = tape.reshape(logits, &[n])?;
        Ok(tape.softmax(logits, 0)?)
    }

    fn check_inputs(&self, buffers: &[MemoryBuffer], tau_e2e: f64) -> Result<(), CasformerError> {
        if buffers.len() < 2 {
            return Err(CasformerError::TooFewDomains(buffers.len()));
        }
        if buffers.len() != self.encoders.len() {
            return Err(CasformerError::DomainCountMismatch { expected: self.encoders.len(), got: buffers.len() });
        }
        if !(tau_e2e > 0.0 && tau_e2e.is_finite()) {
            return Err(CasformerError::InvalidBudget(tau_e2e));
        }
        Ok(())
    }

    /// Whole forward pass on one tape; returns the ratio vector var.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, buffers: &[MemoryBuffer], tau_e2e: f64) -> Result<Var, CasformerError> {
        self.check_inputs(buffers, tau_e2e)?;
        let d = self.config.dim();
        let mut rows = Vec::with_capacity(buffers.len());
        for (n, b) in buffers.iter().enumerate() {
            let h = self.encode_domain(tape, bound, n, b)?;
            rows.push(tape.reshape(h, &[1, d])?);
        }
        let embeddings = tape.concat(&rows, 0)?;
        self.aggregate(tape, bound, embeddings, tau_e2e)
    }

    /// Ratios and the scaled assignment.
    pub fn predict(&self, buffers: &[MemoryBuffer], tau_e2e: f64) -> Result<(RatioVector, Assignment), CasformerError> {
        self.check_inputs(buffers, tau_e2e)?;
        // Layer-1 encoders are independent of each other.
        let embeddings: Vec<Vec<f64>> = buffers
            .par_iter()
            .enumerate()
            .map(|(n, b)| self.eval_domain(n, b))
            .collect::<Result<_, _>>()?;
        let ratios = RatioVector::new(self.eval_aggregate(embeddings.concat(), tau_e2e)?)?;
        let assignment = ratios.scale(tau_e2e)?;
        Ok((ratios, assignment))
    }

    /// Tape-free twin of [`Self::encode_domain`].
    fn eval_domain(&self, n: usize, buffer: &MemoryBuffer) -> Result<Vec<f64>, CasformerError> {
        let d = self.config.dim();
        let tokens = if buffer.is_empty() {
            self.params.get(self.null_token).data().to_vec()
        } else {
            let features: Vec<f64> = buffer.recent_first().flat_map(|r| [r.tau / DELAY_SCALE, r.label()]).collect();
            let len = features.len() / 2;
            let mut tokens = self.record_embed.eval(&self.params, &features, len);
            if self.config.positional_encoding {
                let pe = positional_encoding(len, d);
                tokens.iter_mut().zip(pe.data()).for_each(|(t, p)| *t += p);
            }
            tokens
        };
        let encoded = self.encoders[n].eval(&self.params, &tokens)?;
        let rows = encoded.len() / d;
        let mut pooled = vec![0.0; d];
        for row in encoded.chunks_exact(d) {
            pooled.iter_mut().zip(row).for_each(|(p, v)| *p += v);
        }
        pooled.iter_mut().for_each(|p| *p /= rows as f64);
        Ok(pooled)
    }

    /// Tape-free twin of [`Self::aggregate`] over row-major `[N, d]` embeddings.
    fn eval_aggregate(&self, mut embeddings: Vec<f64>, tau_e2e: f64) -> Result<Vec<f64>, CasformerError> {
        let s = tau_e2e / DELAY_SCALE;
        let budget: Vec<f64> = self.params.get(self.budget_proj).data().iter().map(|w| w * s).collect();
        for row in embeddings.chunks_exact_mut(budget.len()) {
            row.iter_mut().zip(&budget).for_each(|(e, b)| *e += b);
        }
        let n = embeddings.len() / budget.len();
        let mixed = self.aggregator.eval(&self.params, &embeddings)?;
        let mut logits = self.head.eval(&self.params, &mixed, n);
        softmax_rows(&mut logits, n);
        Ok(logits)
    }

    /// Forward-only decomposition.
    pub fn infer(&self, buffers: &[MemoryBuffer], tau_e2e: f64) -> Result<Assignment, CasformerError> {
        self.predict(buffers, tau_e2e).map(|(_, a)| a)
    }

    /// Loss of the current parameters on one sample, no update.
    pub fn sample_loss(&self, sample: &TrainingSample) -> Result<f64, CasformerError> {
        let (ratios, _) = self.predict(&sample.buffers, sample.tau_e2e)?;
        Ok(crate::nn::kl_value(sample.target.as_slice(), ratios.as_slice()))
    }

    /// One AdamW step on `KL(target || predicted)`. Returns the pre-step loss.
    pub fn train_step(&mut self, sample: &TrainingSample) -> Result<f64, CasformerError> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape)?;
        let ratios = self.forward(&mut tape, &bound, &sample.buffers, sample.tau_e2e)?;
        let loss = kl_div(&mut tape, sample.target.as_slice(), ratios)?;
        tape.backward(loss.var)?;
        let grads = self.params.grads(&tape, &bound);
        self.optimizer.step(&mut self.params, &grads)?;
        Ok(loss.value)
    }
}
