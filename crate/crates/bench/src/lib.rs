//! Shared fixtures for the decision-latency benchmarks.

use casformer_core::harness::ExperimentConfig;
use casformer_core::seeding::{stream_rng, Stream};
use casformer_core::{CasformerModel, Environment, MemoryBuffer, RadeState};

/// Teacher and student facing the same full buffers.
pub struct DecisionFixture {
    pub rade: RadeState,
    pub student: CasformerModel,
    pub buffers: Vec<MemoryBuffer>,
    pub tau_e2e: f64,
}

/// Default-sized models over `n` domains with buffers filled to capacity.
/// Decision cost does not depend on training, so nothing is trained.
pub fn fixture(n: usize, seed: u64) -> DecisionFixture {
    let config = ExperimentConfig::default();
    let mut env = Environment::random(n, &config.env_config(), seed).expect("valid environment");
    let probes = env
        .warmup_probes(config.buffer_capacity, config.warmup_lo, config.warmup_hi)
        .expect("valid probe interval");
    let buffers: Vec<MemoryBuffer> =
        probes.into_iter().map(|p| MemoryBuffer::from_records(config.buffer_capacity, p)).collect();
    let mut rade = RadeState::new(n, config.rade_config(), seed, stream_rng(seed, Stream::TeacherSearch))
        .expect("valid teacher config");
    rade.replace_buffers(buffers.clone()).expect("matching domain count");
    let student = CasformerModel::new(config.casformer_config(n), &mut stream_rng(seed, Stream::StudentInit))
        .expect("valid student config");
    DecisionFixture { rade, student, buffers, tau_e2e: 100.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_buffers_are_full_and_decisions_valid() {
        let mut f = fixture(3, 1);
        assert!(f.buffers.iter().all(|b| b.len() == b.capacity()));
        let a = f.student.infer(&f.buffers, f.tau_e2e).unwrap();
        assert!((a.total() - f.tau_e2e).abs() < 1e-9);
        let b = f.rade.decide(f.tau_e2e).unwrap();
        assert!((b.total() - f.tau_e2e).abs() < 1e-6);
    }
}
