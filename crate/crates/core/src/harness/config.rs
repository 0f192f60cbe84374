use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::autodiff::AdamWConfig;
use crate::casformer::CasformerConfig;
use crate::decompose::RadeConfig;
use crate::env::EnvConfig;
use crate::nn::EncoderConfig;

/// Every knob of an experiment run. Loaded from TOML with flat
/// `lower_snake_case` keys; absent keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub num_domains: usize,
    /// Steps per phase; training and testing each run this many.
    pub horizon: usize,
    pub budget_lo: f64,
    pub budget_hi: f64,
    pub buffer_capacity: usize,
    pub warmup_probes: usize,
    pub warmup_lo: f64,
    pub warmup_hi: f64,
    pub ogd_steps: usize,
    pub ogd_lr: f64,
    pub weight_decay: f64,
    pub risk_hidden: usize,
    pub heuristic_samples: usize,
    pub refine_iters: usize,
    pub refine_step: f64,
    pub model_layers: usize,
    pub model_dim: usize,
    pub model_heads: usize,
    pub model_mlp: usize,
    pub student_lr: f64,
    pub positional_encoding: bool,
    pub offline_epochs: usize,
    pub opt_grid_step: f64,
    /// Grid step for OPT once `N >= 4`.
    pub opt_grid_step_wide: f64,
    pub slope_range: [f64; 2],
    pub threshold_range: [f64; 2],
    pub drift_amplitude_range: [f64; 2],
    pub drift_period_range: [f64; 2],
    pub seeds: Vec<u64>,
    pub corruption_rates: Vec<f64>,
    pub ogd_sweep: Vec<usize>,
    pub domain_sweep: Vec<usize>,
    /// How many of `seeds` the scalability study uses.
    pub scalability_seeds: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let env = EnvConfig::default();
        let rade = RadeConfig::default();
        let enc = EncoderConfig::default();
        Self {
            num_domains: 3,
            horizon: 200,
            budget_lo: 90.0,
            budget_hi: 110.0,
            buffer_capacity: rade.buffer_capacity,
            warmup_probes: 50,
            warmup_lo: 5.0,
            warmup_hi: 110.0,
            ogd_steps: rade.ogd_steps,
            ogd_lr: rade.ogd_lr,
            weight_decay: rade.weight_decay,
            risk_hidden: rade.hidden,
            heuristic_samples: rade.heuristic_samples,
            refine_iters: rade.refine_iters,
            refine_step: rade.refine_step,
            model_layers: enc.layers,
            model_dim: enc.dim,
            model_heads: enc.heads,
            model_mlp: enc.mlp,
            student_lr: AdamWConfig::default().lr,
            positional_encoding: true,
            offline_epochs: 20,
            opt_grid_step: 1.0,
            opt_grid_step_wide: 2.0,
            slope_range: env.slope.into(),
            threshold_range: env.threshold.into(),
            drift_amplitude_range: env.drift_amplitude.into(),
            drift_period_range: env.drift_period.into(),
            seeds: (0..10).collect(),
            corruption_rates: vec![0.0, 0.1, 0.2, 0.3],
            ogd_sweep: vec![1, 5, 20, 50],
            domain_sweep: vec![2, 3, 4],
            scalability_seeds: 2,
            output_dir: PathBuf::from("results"),
        }
    }
}

fn invalid(field: &str, why: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{field}: {why}"))
}

fn range(field: &str, [lo, hi]: [f64; 2], min: f64) -> Result<(), HarnessError> {
    if !(lo.is_finite() && hi.is_finite() && lo >= min && lo <= hi) {
        return Err(invalid(field, format!("need {min} <= lo <= hi, got [{lo}, {hi}]")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// All effective parameters as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let counts = [
            ("num_domains", self.num_domains),
            ("horizon", self.horizon),
            ("buffer_capacity", self.buffer_capacity),
            ("warmup_probes", self.warmup_probes),
            ("ogd_steps", self.ogd_steps),
            ("risk_hidden", self.risk_hidden),
            ("heuristic_samples", self.heuristic_samples),
            ("model_layers", self.model_layers),
            ("model_dim", self.model_dim),
            ("model_heads", self.model_heads),
            ("model_mlp", self.model_mlp),
            ("scalability_seeds", self.scalability_seeds),
        ];
        for (field, value) in counts {
            if value == 0 {
                return Err(invalid(field, "must be at least 1"));
            }
        }
        if self.num_domains < 2 {
            return Err(invalid("num_domains", "at least 2 domains are required"));
        }
        if !(self.budget_lo > 0.0 && self.budget_lo <= self.budget_hi && self.budget_hi.is_finite()) {
            return Err(invalid("budget_lo", format!("need 0 < lo <= hi, got [{}, {}]", self.budget_lo, self.budget_hi)));
        }
        if !(self.warmup_lo > 0.0 && self.warmup_lo <= self.warmup_hi && self.warmup_hi.is_finite()) {
            return Err(invalid("warmup_lo", format!("need 0 < lo <= hi, got [{}, {}]", self.warmup_lo, self.warmup_hi)));
        }
        for (field, v) in [
            ("ogd_lr", self.ogd_lr),
            ("weight_decay", self.weight_decay),
            ("student_lr", self.student_lr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        for (field, v) in [
            ("refine_step", self.refine_step),
            ("opt_grid_step", self.opt_grid_step),
            ("opt_grid_step_wide", self.opt_grid_step_wide),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        range("slope_range", self.slope_range, f64::MIN_POSITIVE)?;
        range("threshold_range", self.threshold_range, f64::MIN)?;
        range("drift_amplitude_range", self.drift_amplitude_range, 0.0)?;
        range("drift_period_range", self.drift_period_range, f64::MIN_POSITIVE)?;
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.corruption_rates.is_empty() {
            return Err(invalid("corruption_rates", "must not be empty"));
        }
        if let Some(r) = self.corruption_rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(invalid("corruption_rates", format!("{r} is outside [0, 1]")));
        }
        if self.ogd_sweep.is_empty() || self.ogd_sweep.contains(&0) {
            return Err(invalid("ogd_sweep", "must be non-empty with every entry at least 1"));
        }
        if self.domain_sweep.is_empty() || self.domain_sweep.iter().any(|n| *n < 2) {
            return Err(invalid("domain_sweep", "must be non-empty with every entry at least 2"));
        }
        self.casformer_config(self.num_domains)
            .validate()
            .map_err(|e| invalid("model_dim", e))?;
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            slope: self.slope_range.into(),
            threshold: self.threshold_range.into(),
            drift_amplitude: self.drift_amplitude_range.into(),
            drift_period: self.drift_period_range.into(),
        }
    }

    pub fn rade_config(&self) -> RadeConfig {
        RadeConfig {
            buffer_capacity: self.buffer_capacity,
            hidden: self.risk_hidden,
            ogd_steps: self.ogd_steps,
            ogd_lr: self.ogd_lr,
            weight_decay: self.weight_decay,
            heuristic_samples: self.heuristic_samples,
            refine_iters: self.refine_iters,
            refine_step: self.refine_step,
        }
    }

    pub fn casformer_config(&self, num_domains: usize) -> CasformerConfig {
        let stack = EncoderConfig {
            layers: self.model_layers,
            dim: self.model_dim,
            mlp: self.model_mlp,
            heads: self.model_heads,
        };
        CasformerConfig {
            num_domains,
            encoder: stack,
            aggregator: stack,
            positional_encoding: self.positional_encoding,
            optimizer: AdamWConfig { lr: self.student_lr, ..Default::default() },
        }
    }

    pub fn grid_step_for(&self, num_domains: usize) -> f64 {
        if num_domains >= 4 {
            self.opt_grid_step_wide
        } else {
            self.opt_grid_step
        }
    }
}
