use super::{Assignment, DecomposeError};
use crate::env::Environment;

/// Most grid points `opt_decompose` will enumerate.
pub const GRID_BUDGET: u64 = 2_000_000;

/// Even split of the budget.
pub fn nra_decompose(tau_e2e: f64, n: usize) -> Result<Assignment, DecomposeError> {
    if n == 0 {
        return Err(DecomposeError::InvalidConfig("even split over zero domains".into()));
    }
    Assignment::new(vec![tau_e2e / n as f64; n], tau_e2e)
}

/// Number of grid units and unit size used to discretize `tau_e2e`.
pub fn grid_units(tau_e2e: f64, n: usize, grid_step: f64) -> (u64, f64) {
    let units = ((tau_e2e / grid_step).round() as u64).max(n as u64);
    (units, tau_e2e / units as f64)
}

/// Number of compositions of `units` into `n` positive parts, saturating.
pub fn composition_count(units: u64, n: usize) -> u64 {
    // C(units - 1, n - 1)
    let (top, k) = (units.saturating_sub(1), n.saturating_sub(1) as u64);
    if k > top {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (top - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Exhaustive search with the true acceptance functions.
///
/// `tau_e2e` is split into `round(tau_e2e / grid_step)` equal units and
/// every composition of those units into positive per-domain parts is
/// scored. Enumeration runs in lexicographic order of the part counts and
/// the first maximizer wins.
pub fn opt_decompose(env: &Environment, t: usize, tau_e2e: f64, grid_step: f64) -> Result<Assignment, DecomposeError> {
    if !(grid_step > 0.0) {
        return Err(DecomposeError::InvalidConfig(format!("grid step {grid_step}")));
    }
    let n = env.num_domains();
    let (units, unit) = grid_units(tau_e2e, n, grid_step);
    let count = composition_count(units, n);
    if count > GRID_BUDGET {
        return Err(DecomposeError::GridTooLarge { domains: n, grid_step, points: count, budget: GRID_BUDGET });
    }
    // probs[d][k] = acceptance of domain d at k units
    let probs: Vec<Vec<f64>> = (0..n)
        .map(|d| {
            (0..=units)
                .map(|k| if k == 0 { Ok(0.0) } else { env.acceptance_prob(d, t, k as f64 * unit) })
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;

    let mut parts = vec![0u64; n];
    let mut best_parts = vec![0u64; n];
    let mut best = f64::NEG_INFINITY;
    enumerate(&probs, units, 0, 1.0, &mut parts, &mut best, &mut best_parts);

    let delays = best_parts.iter().map(|k| *k as f64 * unit).collect();
    Assignment::new(delays, tau_e2e)
}

fn enumerate(
    probs: &[Vec<f64>],
    remaining: u64,
    depth: usize,
    acc: f64,
    parts: &mut [u64],
    best: &mut f64,
    best_parts: &mut [u64],
) {
    let n = probs.len();
    if depth == n - 1 {
        parts[depth] = remaining;
        let score = acc * probs[depth][remaining as usize];
        if score > *best {
            *best = score;
            best_parts.copy_from_slice(parts);
        }
        return;
    }
    let left_after = (n - depth - 1) as u64;
    for k in 1..=remaining - left_after {
        parts[depth] = k;
        enumerate(probs, remaining - k, depth + 1, acc * probs[depth][k as usize], parts, best, best_parts);
    }
}

/// Highest true E2E acceptance among explicit candidates; first wins ties.
pub fn best_candidate(
    env: &Environment,
    t: usize,
    candidates: impl IntoIterator<Item = Vec<f64>>,
) -> Result<Option<(Vec<f64>, f64)>, DecomposeError> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for c in candidates {
        let score = env.e2e_acceptance(t, &c)?;
        if best.as_ref().map_or(true, |(_, s)| score > *s) {
            best = Some((c, score));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::env::DomainParams;

    fn domain(slope: f64, threshold: f64) -> DomainParams {
        DomainParams { slope, threshold, drift_amplitude: 0.0, drift_period: 10.0, drift_phase: 0.0 }
    }

    fn env(domains: Vec<DomainParams>) -> Environment {
        Environment::new(domains, ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn even_split_examples() {
        assert_eq!(nra_decompose(99.0, 3).unwrap().delays(), &[33.0, 33.0, 33.0]);
        assert_eq!(nra_decompose(100.0, 4).unwrap().delays(), &[25.0; 4]);
        assert_eq!(nra_decompose(97.5, 1).unwrap().delays(), &[97.5]);
    }

    #[test]
    fn composition_counts() {
        assert_eq!(composition_count(5, 2), 4);
        assert_eq!(composition_count(10, 3), 36);
        assert_eq!(composition_count(2, 3), 0);
    }

    #[test]
    fn symmetric_saturation_prefers_even_split() {
        // both domains saturate above ~50 ms
        let e = env(vec![domain(1.0, 40.0), domain(1.0, 40.0)]);
        let grid = [10.0, 50.0, 90.0];
        let cands = grid.iter().map(|a| vec![*a, 100.0 - a]);
        let (best, _) = best_candidate(&e, 0, cands).unwrap().unwrap();
        assert_eq!(best, vec![50.0, 50.0]);
    }

    #[test]
    fn identical_domains_match_even_split() {
        let e = env(vec![domain(0.3, 30.0); 3]);
        let a = opt_decompose(&e, 0, 99.0, 1.0).unwrap();
        let even = e.e2e_acceptance(0, &[33.0; 3]).unwrap();
        assert!((e.e2e_acceptance(0, a.delays()).unwrap() - even).abs() < 1e-12);
    }

    #[test]
    fn grid_budget_enforced() {
        let e = env(vec![domain(0.3, 30.0); 6]);
        let err = opt_decompose(&e, 0, 100.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("coarser"), "{err}");
        assert!(opt_decompose(&e, 0, 100.0, 10.0).is_ok());
    }
}
