use serde::{Deserialize, Serialize};

use super::{AutodiffError, Grads, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// AdamW with decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        let zeros = || params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads) -> Result<(), AutodiffError> {
        if self.m.len() != params.len() {
            let name = params.iter().nth(self.m.len().min(params.len().saturating_sub(1)));
            return Err(AutodiffError::StateMismatch {
                name: name.map(|(_, n, _)| n.to_string()).unwrap_or_default(),
            });
        }
        for id in params.ids() {
            let g = grads
                .get(id)
                .ok_or_else(|| AutodiffError::MissingGrad { name: params.name(id).to_string() })?;
            if g.shape() != params.get(id).shape() || self.m[id.index()].shape() != g.shape() {
                return Err(AutodiffError::StateMismatch { name: params.name(id).to_string() });
            }
        }

        self.step += 1;
        let AdamWConfig { lr, beta1, beta2, eps, weight_decay } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for id in params.ids() {
            let g = grads.get(id).expect("checked above").data();
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            let w = params.get_mut(id).data_mut();
            for i in 0..w.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                if lr != 0.0 {
                    w[i] -= lr * weight_decay * w[i];
                    w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, g: f64, config: AdamWConfig) -> f64 {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::vector(vec![w]));
        let mut opt = AdamW::new(config, &store);
        opt.step(&mut store, &Grads::from_vec(vec![Some(Tensor::vector(vec![g]))])).unwrap();
        assert_eq!(opt.steps_taken(), 1);
        store.get(id).data()[0]
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        // m_hat = 1, v_hat = 1 -> 1 - 0.1 / (1 + 1e-8)
        let w = single(1.0, 1.0, cfg);
        assert!((w - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!((w - 0.9).abs() < 1e-8);
    }

    #[test]
    fn zero_gradient_no_decay_is_fixed_point() {
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        assert_eq!(single(1.0, 0.0, cfg), 1.0);
    }

    #[test]
    fn decoupled_decay_alone() {
        let cfg = AdamWConfig { lr: 0.1, weight_decay: 0.1, ..Default::default() };
        assert!((single(1.0, 0.0, cfg) - 0.99).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_bit_identical() {
        let cfg = AdamWConfig { lr: 0.0, ..Default::default() };
        for (w, g) in [(0.3, 5.0), (-2.5, -1e3), (1e-300, 1e-3), (-0.0, 1.0)] {
            assert_eq!(single(w, g, cfg).to_bits(), w.to_bits());
        }
    }

    #[test]
    fn missing_gradient_names_parameter() {
        let mut store = ParamStore::new();
        store.add("encoder.w", Tensor::vector(vec![1.0]));
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let err = opt.step(&mut store, &Grads::from_vec(vec![None])).unwrap_err();
        assert!(err.to_string().contains("encoder.w"));
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn step_counter_increments() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::vector(vec![1.0, 2.0]));
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        let grads = Grads::from_vec(vec![Some(Tensor::vector(vec![0.5, -0.5]))]);
        for expected in 1..=3 {
            opt.step(&mut store, &grads).unwrap();
            assert_eq!(opt.steps_taken(), expected);
        }
    }
}
