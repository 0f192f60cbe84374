use rand::Rng;

use crate::autodiff::{matmul, AutodiffError, Bound, ParamId, ParamStore, Tape, Tensor, Var};

/// `x · W + b` over the rows of `x`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), &[fan_in, fan_out], fan_in, rng);
        let bias = bias.then(|| store.add_uniform(format!("{name}.bias"), &[fan_out], fan_in, rng));
        Self { weight, bias, fan_in, fan_out }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, AutodiffError> {
        let y = tape.matmul(x, bound.var(self.weight))?;
        match self.bias {
            Some(b) => tape.add(y, bound.var(b)),
            None => Ok(y),
        }
    }

    /// Tape-free forward over `rows` rows of `x`.
    pub fn eval(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let mut y = matmul(x, store.get(self.weight).data(), rows, self.fan_in, self.fan_out);
        if let Some(b) = self.bias {
            let b = store.get(b).data();
            for row in y.chunks_exact_mut(self.fan_out) {
                row.iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
            }
        }
        y
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[width]));
        Self { gamma, beta, eps: Self::DEFAULT_EPS }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, AutodiffError> {
        tape.layer_norm(x, bound.var(self.gamma), bound.var(self.beta), self.eps)
    }

    /// Tape-free forward over rows of width `gamma.len()`.
    pub fn eval(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let (g, b) = (store.get(self.gamma).data(), store.get(self.beta).data());
        let width = g.len();
        let mut out = vec![0.0; x.len()];
        for (row, dst) in x.chunks_exact(width).zip(out.chunks_exact_mut(width)) {
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + self.eps).sqrt();
            for j in 0..width {
                dst[j] = (row[j] - mean) * is * g[j] + b[j];
            }
        }
        out
    }
}
