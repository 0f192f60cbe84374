//! Gradient-check and oracle-equivalence suites, shared by the CLI
//! `selftest` command and the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{finite_difference_check, AutodiffError, Bound, ParamStore, Tape, Tensor, Var};
use crate::casformer::{norm_sum, CasformerConfig, CasformerModel};
use crate::decompose::{opt_decompose, MemoryBuffer};
use crate::env::{EnvConfig, Environment, FeedbackRecord};
use crate::nn::{bce_loss, kl_div, mean_pool, EncoderConfig, EncoderStack, LayerNorm, Linear, MultiHeadAttention};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const END_TO_END_TOLERANCE: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-5;
/// Step for the whole-model check. Several parameters there have exactly
/// zero gradient (shifts shared by every logit cancel in the softmax), and
/// at 1e-5 a one-ulp change of the loss alone exceeds the tolerance.
pub const END_TO_END_FD_STEP: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn error(name: &str, tolerance: f64, worst: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: worst < tolerance,
            detail: format!("max rel err {worst:.2e} (limit {tolerance:.0e})"),
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

type Res = Result<Var, AutodiffError>;

/// Contracts `y` with fixed non-uniform weights so every output matters.
fn weighted_sum(t: &mut Tape, y: Var) -> Res {
    let shape = t.shape(y).to_vec();
    let n: usize = shape.iter().product();
    let w = (0..n).map(|i| 0.5 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let w = t.constant(Tensor::new(shape, w)?)?;
    let prod = t.mul(y, w)?;
    t.sum(prod)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape matches data")
}

/// Values in [-1, 1] with magnitude at least `gap`, away from kinks.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(gap..1.0);
            if rng.gen() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

const POINTS: usize = 10;

/// Binds `store` on each fresh tape before running `f`.
fn with_params<'a, F>(store: &'a ParamStore, f: F) -> impl Fn(&mut Tape, Var) -> Res + 'a
where
    F: Fn(&mut Tape, &Bound, Var) -> Res + 'a,
{
    move |t, x| {
        let bound = store.bind(t)?;
        f(t, &bound, x)
    }
}

/// Worst relative error over `POINTS` random inputs drawn by `draw`.
fn check_op<D, F>(name: &str, rng: &mut ChaCha8Rng, mut draw: D, f: F) -> Result<Check, AutodiffError>
where
    D: FnMut(&mut ChaCha8Rng) -> Tensor,
    F: Fn(&mut Tape, Var) -> Res,
{
    let mut worst: f64 = 0.0;
    for _ in 0..POINTS {
        let x = draw(rng);
        worst = worst.max(finite_difference_check(|t, v| f(t, v).and_then(|y| weighted_sum(t, y)), &x, FD_STEP)?);
    }
    Ok(Check::error(name, OP_TOLERANCE, worst))
}

/// Finite-difference checks of every tape op and every network layer.
pub fn gradient_suite(seed: u64) -> Result<Vec<Check>, AutodiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = |shape: &'static [usize]| move |r: &mut ChaCha8Rng| random_tensor(r, shape, -1.0, 1.0);
    let c34 = random_tensor(&mut rng, &[3, 4], -1.0, 1.0);
    let c42 = random_tensor(&mut rng, &[4, 2], -1.0, 1.0);
    let c23 = random_tensor(&mut rng, &[2, 3], -1.0, 1.0);
    let gamma = random_tensor(&mut rng, &[4], 0.5, 1.5);
    let beta = random_tensor(&mut rng, &[4], -0.5, 0.5);

    let mut checks = Vec::new();
    macro_rules! op {
        ($name:expr, $draw:expr, $f:expr) => {
            checks.push(check_op($name, &mut rng, $draw, $f)?)
        };
    }

    op!("matmul (left)", u(&[3, 4]), |t, x| {
        let c = t.constant(c42.clone())?;
        t.matmul(x, c)
    });
    op!("matmul (right)", u(&[3, 4]), |t, x| {
        let c = t.constant(c23.clone())?;
        t.matmul(c, x)
    });
    op!("add", u(&[3, 4]), |t, x| {
        let c = t.constant(c34.clone())?;
        t.add(x, c)
    });
    op!("add (row broadcast)", u(&[4]), |t, x| {
        let c = t.constant(c34.clone())?;
        t.add(c, x)
    });
    op!("sub", u(&[3, 4]), |t, x| {
        let c = t.constant(c34.clone())?;
        let a = t.sub(c, x)?;
        t.sub(a, x)
    });
    op!("mul", u(&[3, 4]), |t, x| {
        let c = t.constant(c34.clone())?;
        let a = t.mul(x, c)?;
        t.mul(a, x)
    });
    op!("scale", u(&[3, 4]), |t, x| t.scale(x, -2.5));
    op!("add_scalar", u(&[3, 4]), |t, x| {
        let a = t.add_scalar(x, 0.75)?;
        t.mul(a, a)
    });
    op!("exp", u(&[3, 4]), |t, x| t.exp(x));
    op!("log", |r: &mut ChaCha8Rng| random_tensor(r, &[3, 4], 0.5, 2.0), |t, x| t.log(x));
    op!("sigmoid", |r: &mut ChaCha8Rng| random_tensor(r, &[3, 4], -4.0, 4.0), |t, x| t.sigmoid(x));
    op!("relu", |r: &mut ChaCha8Rng| away_from_zero(r, &[3, 4], 0.05), |t, x| t.relu(x));
    op!("gelu", |r: &mut ChaCha8Rng| random_tensor(r, &[3, 4], -3.0, 3.0), |t, x| t.gelu(x));
    op!("softmax (rows)", u(&[3, 4]), |t, x| t.softmax(x, 1));
    op!("softmax (columns)", u(&[3, 4]), |t, x| t.softmax(x, 0));
    op!("layer_norm (input)", u(&[3, 4]), |t, x| {
        let (g, b) = (t.constant(gamma.clone())?, t.constant(beta.clone())?);
        t.layer_norm(x, g, b, 1e-5)
    });
    op!("layer_norm (gain)", u(&[4]), |t, g| {
        let (x, b) = (t.constant(c34.clone())?, t.constant(beta.clone())?);
        t.layer_norm(x, g, b, 1e-5)
    });
    op!("layer_norm (bias)", u(&[4]), |t, b| {
        let (x, g) = (t.constant(c34.clone())?, t.constant(gamma.clone())?);
        t.layer_norm(x, g, b, 1e-5)
    });
    op!("mean (axis 0)", u(&[3, 4]), |t, x| t.mean(x, 0));
    op!("mean (axis 1)", u(&[3, 4]), |t, x| t.mean(x, 1));
    op!("sum", u(&[3, 4]), |t, x| {
        let sq = t.mul(x, x)?;
        t.sum(sq)
    });
    op!("concat", u(&[3, 4]), |t, x| {
        let c = t.constant(c34.clone())?;
        let a = t.concat(&[x, c, x], 0)?;
        let b = t.concat(&[c, x], 1)?;
        let (sa, sb) = (t.sum(a)?, t.mul(b, b)?);
        let sb = t.sum(sb)?;
        t.mul(sa, sb)
    });
    op!("slice", u(&[3, 4]), |t, x| {
        let a = t.slice(x, 1, 1, 3)?;
        t.slice(a, 0, 0, 2)
    });
    op!("transpose", u(&[3, 4]), |t, x| {
        let xt = t.transpose(x)?;
        let c = t.constant(c34.clone())?;
        t.matmul(xt, c)
    });
    op!("reshape", u(&[3, 4]), |t, x| {
        let r = t.reshape(x, &[2, 6])?;
        t.mul(r, r)
    });
    op!("clamp", |r: &mut ChaCha8Rng| away_from_zero(r, &[3, 4], 0.05), |t, x| t.clamp(x, -0.5, 0.5));

    // Layers: the input gradient flows through every parameterized op.
    let mut store = ParamStore::new();
    let linear = Linear::new(&mut store, "lin", 4, 3, true, &mut rng);
    let norm = LayerNorm::new(&mut store, "ln", 4);
    let attn = MultiHeadAttention::new(&mut store, "attn", 4, 2, &mut rng);
    let stack_cfg = EncoderConfig { layers: 2, dim: 4, mlp: 8, heads: 2 };
    let stack = EncoderStack::new(&mut store, "enc", stack_cfg, &mut rng).map_err(nn_to_ad)?;
    op!("linear", u(&[3, 4]), with_params(&store, |t, b, x| linear.forward(t, b, x)));
    op!("layer norm module", u(&[3, 4]), with_params(&store, |t, b, x| norm.forward(t, b, x)));
    op!("self-attention", u(&[3, 4]), with_params(&store, |t, b, x| attn.forward(t, b, x).map_err(nn_to_ad)));
    op!("encoder stack", u(&[3, 4]), with_params(&store, |t, b, x| stack.forward(t, b, x).map_err(nn_to_ad)));
    op!("mean pool", u(&[3, 4]), |t, x| mean_pool(t, x).map_err(nn_to_ad));
    let labels = [1.0, 0.0, 1.0, 1.0, 0.0];
    op!("bce loss", |r: &mut ChaCha8Rng| random_tensor(r, &[5, 1], 0.05, 0.95), move |t, p| {
        bce_loss(t, p, &labels).map(|l| l.var).map_err(nn_to_ad)
    });
    let target = [0.5, 0.3, 0.2, 0.0];
    op!("kl loss", u(&[4]), move |t, z| {
        let p = t.softmax(z, 0)?;
        kl_div(t, &target, p).map(|l| l.var).map_err(nn_to_ad)
    });
    Ok(checks)
}

/// Layer errors other than tape errors only arise from bad shapes, which
/// the fixed fixtures above rule out.
fn nn_to_ad(e: crate::nn::NnError) -> AutodiffError {
    match e {
        crate::nn::NnError::Autodiff(inner) => inner,
        _ => AutodiffError::ShapeMismatch { op: "layer", shapes: Vec::new() },
    }
}

/// Coordinatewise relative error with a small absolute floor, worst case.
fn worst_relative(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Same floor as `finite_difference_check`.
const RELATIVE_FLOOR: f64 = 1e-8;

/// Gradient of the distillation loss with respect to every parameter of a
/// tiny student, through both cascade layers.
pub fn casformer_gradient_check(seed: u64) -> Result<Check, crate::casformer::CasformerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stack = EncoderConfig { layers: 1, dim: 4, mlp: 8, heads: 2 };
    let config = CasformerConfig { num_domains: 3, encoder: stack, aggregator: stack, ..Default::default() };
    let mut model = CasformerModel::new(config, &mut rng)?;
    let buffers: Vec<MemoryBuffer> = (0..3)
        .map(|n| {
            // domain 0 stays empty so the null token is on the gradient path
            let len = if n == 0 { 0 } else { 2 + n };
            let recs = (0..len).map(|t| FeedbackRecord { tau: rng.gen_range(5.0..110.0), accepted: rng.gen(), t });
            MemoryBuffer::from_records(10, recs)
        })
        .collect();
    let tau = 97.0;
    let target = norm_sum(&[45.0, 30.0, 22.0])?;

    let loss_at = |model: &CasformerModel| -> Result<f64, crate::casformer::CasformerError> {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape)?;
        let ratios = model.forward(&mut tape, &bound, &buffers, tau)?;
        Ok(kl_div(&mut tape, target.as_slice(), ratios)?.value)
    };

    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape)?;
    let ratios = model.forward(&mut tape, &bound, &buffers, tau)?;
    let loss = kl_div(&mut tape, target.as_slice(), ratios)?;
    tape.backward(loss.var)?;
    let grads = model.params().grads(&tape, &bound);

    let ids: Vec<_> = model.params().ids().collect();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for id in ids {
        let g = grads.get(id).expect("grads cover every parameter").data().to_vec();
        for (i, gi) in g.into_iter().enumerate() {
            let original = model.params().get(id).data()[i];
            model.params_mut().get_mut(id).data_mut()[i] = original + END_TO_END_FD_STEP;
            let plus = loss_at(&model)?;
            model.params_mut().get_mut(id).data_mut()[i] = original - END_TO_END_FD_STEP;
            let minus = loss_at(&model)?;
            model.params_mut().get_mut(id).data_mut()[i] = original;
            analytic.push(gi);
            numeric.push((plus - minus) / (2.0 * END_TO_END_FD_STEP));
        }
    }
    let worst = worst_relative(&analytic, &numeric, RELATIVE_FLOOR);
    let mut check = Check::error("casformer end-to-end KL", END_TO_END_TOLERANCE, worst);
    check.detail = format!("{} over {} parameters", check.detail, analytic.len());
    Ok(check)
}

/// Grid optimum by plain nested loops, written independently of
/// `opt_decompose`: returns (best objective, best delays).
pub fn brute_force_optimum(env: &Environment, t: usize, tau_e2e: f64, grid_step: f64) -> Result<(f64, Vec<f64>), crate::env::EnvError> {
    let units = ((tau_e2e / grid_step).round() as usize).max(env.num_domains());
    let unit = tau_e2e / units as f64;
    let p = |domain: usize, k: usize| env.acceptance_prob(domain, t, k as f64 * unit);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    match env.num_domains() {
        2 => {
            for a in 1..units {
                let score = 1.0 * p(0, a)? * p(1, units - a)?;
                if score > best.0 {
                    best = (score, vec![a as f64 * unit, (units - a) as f64 * unit]);
                }
            }
        }
        3 => {
            for a in 1..units - 1 {
                for b in 1..units - a {
                    let c = units - a - b;
                    let score = 1.0 * p(0, a)? * p(1, b)? * p(2, c)?;
                    if score > best.0 {
                        best = (score, vec![a as f64 * unit, b as f64 * unit, c as f64 * unit]);
                    }
                }
            }
        }
        n => return Err(crate::env::EnvError::InvalidDomain { index: n, count: 3 }),
    }
    Ok(best)
}

pub const ORACLE_GRID_STEP: f64 = 5.0;

/// `opt_decompose` against [`brute_force_optimum`] on random instances
/// with two and three domains.
pub fn oracle_suite(instances: usize, seed: u64) -> Result<Check, crate::decompose::DecomposeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut value_mismatch, mut ties) = (0, 0);
    for i in 0..instances {
        let n = 2 + i % 2;
        let domains = EnvConfig::default().sample(n, &mut rng);
        let env = Environment::new(domains, ChaCha8Rng::seed_from_u64(i as u64))?;
        let t = rng.gen_range(0..400);
        let tau = rng.gen_range(90.0..110.0);
        let opt = opt_decompose(&env, t, tau, ORACLE_GRID_STEP)?;
        let (best, delays) = brute_force_optimum(&env, t, tau, ORACLE_GRID_STEP)?;
        let opt_value = env.e2e_acceptance(t, opt.delays())?;
        let brute_value = env.e2e_acceptance(t, &delays)?;
        if opt_value != brute_value || (best - brute_value).abs() > 1e-15 {
            value_mismatch += 1;
        } else if opt.delays() != delays.as_slice() {
            ties += 1;
        }
    }
    Ok(Check {
        name: "grid optimum vs brute force".into(),
        passed: value_mismatch == 0,
        detail: format!("{instances} instances, {value_mismatch} objective mismatches, {ties} ties"),
    })
}

/// Every suite with fixed seeds.
pub fn run_all() -> Vec<Check> {
    let mut checks = match gradient_suite(1) {
        Ok(c) => c,
        Err(e) => vec![Check { name: "gradient suite".into(), passed: false, detail: e.to_string() }],
    };
    checks.push(casformer_gradient_check(2).unwrap_or_else(|e| Check {
        name: "casformer end-to-end KL".into(),
        passed: false,
        detail: e.to_string(),
    }));
    checks.push(oracle_suite(100, 3).unwrap_or_else(|e| Check {
        name: "grid optimum vs brute force".into(),
        passed: false,
        detail: e.to_string(),
    }));
    checks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass() {
        let checks = run_all();
        for c in &checks {
            println!("{c}");
        }
        assert!(checks.iter().all(|c| c.passed));
    }

    #[test]
    fn end_to_end_check_is_seed_robust() {
        for seed in 0..16 {
            let c = casformer_gradient_check(seed).unwrap();
            assert!(c.passed, "seed {seed}: {}", c.detail);
        }
    }
}
