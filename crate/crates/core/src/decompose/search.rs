use rand::Rng;
use rand_distr::Exp1;

use super::{AcceptanceModel, Assignment, DecomposeError};

/// Added inside the log of the refinement objective.
pub const LOG_OBJECTIVE_EPS: f64 = 1e-8;

/// Product of per-domain model probabilities for `delays`.
pub fn model_objective<M: AcceptanceModel>(models: &[M], delays: &[f64]) -> f64 {
    models.iter().zip(delays).map(|(m, d)| m.prob(*d)).product()
}

/// Best of `samples` flat-Dirichlet draws scaled to `tau_e2e`, scored by
/// the product of model probabilities. Ties keep the earliest sample.
pub fn heuristic_search<M: AcceptanceModel, R: Rng + ?Sized>(
    models: &[M],
    tau_e2e: f64,
    samples: usize,
    rng: &mut R,
) -> Result<Assignment, DecomposeError> {
    let n = models.len();
    if n == 0 || samples == 0 {
        return Err(DecomposeError::InvalidConfig(format!(
            "heuristic search needs domains and samples, got {n} domains and {samples} samples"
        )));
    }
    if !(tau_e2e > 0.0 && tau_e2e.is_finite()) {
        return Err(DecomposeError::InvalidAssignment(format!("budget {tau_e2e}")));
    }

    // column n holds every candidate's delay for domain n
    let mut columns = vec![vec![0.0; samples]; n];
    let mut draw = vec![0.0; n];
    for s in 0..samples {
        for d in draw.iter_mut() {
            *d = rng.sample::<f64, _>(Exp1).max(f64::MIN_POSITIVE);
        }
        let total: f64 = draw.iter().sum();
        for (col, d) in columns.iter_mut().zip(&draw) {
            col[s] = d / total * tau_e2e;
        }
    }

    let mut score = vec![1.0; samples];
    let mut probs = Vec::with_capacity(samples);
    for (model, col) in models.iter().zip(&columns) {
        model.prob_batch(col, &mut probs);
        score.iter_mut().zip(&probs).for_each(|(s, p)| *s *= p);
    }
    let mut best = 0;
    for (i, s) in score.iter().enumerate() {
        if *s > score[best] {
            best = i;
        }
    }
    let delays: Vec<f64> = columns.iter().map(|c| c[best]).collect();
    Assignment::new(rescale(delays, tau_e2e), tau_e2e)
}

/// Gradient ascent on `sum_n ln(f_n(tau_n) + eps)` over
/// `tau = softmax(z) * tau_e2e`, starting from `z = ln(init / tau_e2e)`.
///
/// The step size adapts: it grows after an improving step and halves after
/// a rejected one. Returns the iterate with the highest model objective,
/// so the result never scores below `init`.
pub fn refine<M: AcceptanceModel>(
    models: &[M],
    tau_e2e: f64,
    init: &Assignment,
    iters: usize,
    step: f64,
) -> Result<Assignment, DecomposeError> {
    if init.len() != models.len() {
        return Err(DecomposeError::LengthMismatch { expected: models.len(), got: init.len() });
    }
    if iters == 0 {
        return Ok(init.clone());
    }
    let mut z: Vec<f64> = init.delays().iter().map(|d| (d / tau_e2e).ln()).collect();
    let mut alpha = step;
    let (mut log_obj, mut grad) = log_objective_and_grad(models, tau_e2e, &z);
    let mut best = init.clone();
    let mut best_score = model_objective(models, init.delays());

    for _ in 0..iters {
        let candidate: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + alpha * gi).collect();
        let (cand_obj, cand_grad) = log_objective_and_grad(models, tau_e2e, &candidate);
        if cand_obj > log_obj {
            z = candidate;
            log_obj = cand_obj;
            grad = cand_grad;
            alpha *= 1.5;
            let delays = rescale(softmax(&z).iter().map(|w| w * tau_e2e).collect(), tau_e2e);
            if delays.iter().all(|d| *d > 0.0) {
                let score = model_objective(models, &delays);
                if score > best_score {
                    best_score = score;
                    best = Assignment::new(delays, tau_e2e)?;
                }
            }
        } else {
            alpha *= 0.5;
        }
    }
    Ok(best)
}

fn log_objective_and_grad<M: AcceptanceModel>(models: &[M], tau_e2e: f64, z: &[f64]) -> (f64, Vec<f64>) {
    let phi = softmax(z);
    let mut obj = 0.0;
    let mut g = Vec::with_capacity(phi.len());
    for (m, w) in models.iter().zip(&phi) {
        let (p, dp) = m.prob_and_grad(w * tau_e2e);
        obj += (p + LOG_OBJECTIVE_EPS).ln();
        g.push(dp / (p + LOG_OBJECTIVE_EPS));
    }
    // d/dz_j = tau * phi_j * (g_j - sum_n phi_n g_n)
    let mean_g: f64 = phi.iter().zip(&g).map(|(w, gi)| w * gi).sum();
    let grad = phi.iter().zip(&g).map(|(w, gi)| tau_e2e * w * (gi - mean_g)).collect();
    (obj, grad)
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Removes floating-point drift so the delays add up to `tau_e2e`.
fn rescale(mut delays: Vec<f64>, tau_e2e: f64) -> Vec<f64> {
    let total: f64 = delays.iter().sum();
    delays.iter_mut().for_each(|d| *d *= tau_e2e / total);
    delays
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::decompose::GroundTruth;
    use crate::env::DomainParams;

    fn truth(slope: f64, threshold: f64) -> GroundTruth {
        GroundTruth {
            params: DomainParams { slope, threshold, drift_amplitude: 0.0, drift_period: 10.0, drift_phase: 0.0 },
            t: 0,
        }
    }

    #[test]
    fn single_sample_is_returned() {
        let models = [truth(0.2, 30.0), truth(0.3, 20.0)];
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = a.clone();
        let got = heuristic_search(&models, 100.0, 1, &mut a).unwrap();
        let e: Vec<f64> = (0..2).map(|_| b.sample::<f64, _>(Exp1)).collect();
        let total: f64 = e.iter().sum();
        for (g, x) in got.delays().iter().zip(&e) {
            assert!((g - x / total * 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn samples_sum_to_budget() {
        let models = [truth(0.2, 30.0), truth(0.3, 20.0), truth(0.1, 40.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for budget in [90.0, 97.3, 110.0] {
            let a = heuristic_search(&models, budget, 500, &mut rng).unwrap();
            assert!((a.total() - budget).abs() < 1e-9);
        }
    }

    #[test]
    fn refine_zero_iterations_is_identity() {
        let models = [truth(0.2, 30.0), truth(0.3, 20.0)];
        let init = Assignment::new(vec![70.0, 30.0], 100.0).unwrap();
        assert_eq!(refine(&models, 100.0, &init, 0, 0.1).unwrap(), init);
    }

    #[test]
    fn refine_recovers_grid_optimum_two_domains() {
        let models = [truth(0.25, 40.0), truth(0.15, 25.0)];
        let budget = 100.0;
        // brute-force grid at 0.1 ms
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 1..1000 {
            let t1 = k as f64 * 0.1;
            let score = models[0].prob(t1) * models[1].prob(budget - t1);
            if score > best.1 {
                best = (t1, score);
            }
        }
        let init = Assignment::new(vec![20.0, 80.0], budget).unwrap();
        let out = refine(&models, budget, &init, 50, 0.05).unwrap();
        assert!((out.delays()[0] - best.0).abs() < 1.0, "{:?} vs {}", out.delays(), best.0);
        assert!((out.total() - budget).abs() < 1e-6 * budget);
        assert!(model_objective(&models, out.delays()) >= model_objective(&models, init.delays()));
    }
}
