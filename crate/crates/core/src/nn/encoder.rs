use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LayerNorm, Linear, NnError};
use crate::autodiff::{gelu, matmul, softmax_rows, Bound, ParamStore, Tape, Var};

/// Shape of one Transformer encoder stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub layers: usize,
    pub dim: usize,
    pub mlp: usize,
    pub heads: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { layers: 2, dim: 16, mlp: 64, heads: 2 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers == 0 || self.dim == 0 || self.mlp == 0 || self.heads == 0 {
            return Err(NnError::Config(format!("encoder sizes must be positive: {self:?}")));
        }
        if self.dim % self.heads != 0 {
            return Err(NnError::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Multi-head self-attention with a fused QKV projection.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub out: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut R) -> Self {
        Self {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, true, rng),
            out: Linear::new(store, &format!("{name}.out"), dim, dim, true, rng),
            heads,
            dim,
        }
    }

    /// `x` is `[len, dim]`.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        let qkv = self.qkv.forward(tape, bound, x)?;
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let lo = h * head_dim;
            let q = tape.slice(qkv, 1, lo, lo + head_dim)?;
            let k = tape.slice(qkv, 1, self.dim + lo, self.dim + lo + head_dim)?;
            let v = tape.slice(qkv, 1, 2 * self.dim + lo, 2 * self.dim + lo + head_dim)?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, scale)?;
            let weights = tape.softmax(scores, 1)?;
            outputs.push(tape.matmul(weights, v)?);
        }
        let merged = if outputs.len() == 1 { outputs[0] } else { tape.concat(&outputs, 1)? };
        Ok(self.out.forward(tape, bound, merged)?)
    }

    /// Tape-free forward of `rows` tokens; same arithmetic as [`Self::forward`].
    pub fn eval(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let d = self.dim;
        let qkv = self.qkv.eval(store, x, rows);
        let head_dim = d / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut merged = vec![0.0; rows * d];
        let mut q = vec![0.0; rows * head_dim];
        let mut kt = vec![0.0; head_dim * rows];
        let mut v = vec![0.0; rows * head_dim];
        for h in 0..self.heads {
            let lo = h * head_dim;
            for (r, row) in qkv.chunks_exact(3 * d).enumerate() {
                q[r * head_dim..(r + 1) * head_dim].copy_from_slice(&row[lo..lo + head_dim]);
                v[r * head_dim..(r + 1) * head_dim].copy_from_slice(&row[2 * d + lo..2 * d + lo + head_dim]);
                for c in 0..head_dim {
                    kt[c * rows + r] = row[d + lo + c];
                }
            }
            let mut scores = matmul(&q, &kt, rows, head_dim, rows);
            scores.iter_mut().for_each(|s| *s *= scale);
            softmax_rows(&mut scores, rows);
            let o = matmul(&scores, &v, rows, rows, head_dim);
            for (dst, src) in merged.chunks_exact_mut(d).zip(o.chunks_exact(head_dim)) {
                dst[lo..lo + head_dim].copy_from_slice(src);
            }
        }
        self.out.eval(store, &merged, rows)
    }
}

/// Pre-norm encoder layer: `x + MHSA(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub norm_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm_mlp: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut R) -> Self {
        Self {
            norm_attn: LayerNorm::new(store, &format!("{name}.norm_attn"), cfg.dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg.dim, cfg.heads, rng),
            norm_mlp: LayerNorm::new(store, &format!("{name}.norm_mlp"), cfg.dim),
            fc1: Linear::new(store, &format!("{name}.fc1"), cfg.dim, cfg.mlp, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), cfg.mlp, cfg.dim, true, rng),
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var, NnError> {
        let h = self.norm_attn.forward(tape, bound, x)?;
        let h = self.attn.forward(tape, bound, h)?;
        let x = tape.add(x, h)?;
        let h = self.norm_mlp.forward(tape, bound, x)?;
        let h = self.fc1.forward(tape, bound, h)?;
        let h = tape.gelu(h)?;
        let h = self.fc2.forward(tape, bound, h)?;
        Ok(tape.add(x, h)?)
    }

    pub fn eval(&self, store: &ParamStore, x: &[f64], rows: usize) -> Vec<f64> {
        let h = self.norm_attn.eval(store, x);
        let h = self.attn.eval(store, &h, rows);
        let x: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
        let h = self.norm_mlp.eval(store, &x);
        let mut h = self.fc1.eval(store, &h, rows);
        h.iter_mut().for_each(|v| *v = gelu(*v));
        let h = self.fc2.eval(store, &h, rows);
        x.iter().zip(&h).map(|(a, b)| a + b).collect()
    }
}

#[derive(Clone, Debug)]
pub struct EncoderStack {
    pub config: EncoderConfig,
    pub layers: Vec<EncoderLayer>,
}

impl EncoderStack {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        config: EncoderConfig,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        config.validate()?;
        let layers = (0..config.layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), &config, rng))
            .collect();
        Ok(Self { config, layers })
    }

    /// Maps a `[len, dim]` token sequence to a sequence of the same shape.
    pub fn forward(&self, tape: &mut Tape, bound: &Bound, tokens: Var) -> Result<Var, NnError> {
        let shape = tape.shape(tokens);
        if shape.len() != 2 || shape[1] != self.config.dim {
            return Err(NnError::TokenShape { expected: self.config.dim, got: shape.to_vec() });
        }
        if shape[0] == 0 {
            return Err(NnError::EmptySequence);
        }
        self.layers.iter().try_fold(tokens, |x, layer| layer.forward(tape, bound, x))
    }

    /// Tape-free forward over row-major `[rows, dim]` tokens.
    pub fn eval(&self, store: &ParamStore, tokens: &[f64]) -> Result<Vec<f64>, NnError> {
        let dim = self.config.dim;
        if tokens.is_empty() {
            return Err(NnError::EmptySequence);
        }
        if tokens.len() % dim != 0 {
            return Err(NnError::TokenShape { expected: dim, got: vec![tokens.len()] });
        }
        let rows = tokens.len() / dim;
        Ok(self.layers.iter().fold(tokens.to_vec(), |x, layer| layer.eval(store, &x, rows)))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::autodiff::Tensor;

    fn stack(cfg: EncoderConfig, seed: u64) -> (ParamStore, EncoderStack) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = EncoderStack::new(&mut store, "enc", cfg, &mut rng).unwrap();
        (store, stack)
    }

    fn run(store: &ParamStore, stack: &EncoderStack, rows: usize, data: Vec<f64>) -> Tensor {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape).unwrap();
        let x = tape.leaf(Tensor::matrix(rows, stack.config.dim, data).unwrap()).unwrap();
        let y = stack.forward(&mut tape, &bound, x).unwrap();
        tape.value(y).clone()
    }

    #[test]
    fn rejects_indivisible_heads() {
        let cfg = EncoderConfig { dim: 16, heads: 3, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn length_one_sequence() {
        let (store, enc) = stack(EncoderConfig::default(), 1);
        let out = run(&store, &enc, 1, (0..16).map(|i| i as f64 / 16.0).collect());
        assert_eq!(out.shape(), &[1, 16]);
        assert!(out.is_finite());
    }

    #[test]
    fn empty_sequence_is_error() {
        let (store, enc) = stack(EncoderConfig::default(), 1);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape).unwrap();
        let x = tape.leaf(Tensor::zeros(&[0, 16])).unwrap();
        assert!(matches!(enc.forward(&mut tape, &bound, x), Err(NnError::EmptySequence)));
    }

    #[test]
    fn eval_matches_tape_forward() {
        for (heads, len) in [(1, 1), (2, 5), (4, 9)] {
            let cfg = EncoderConfig { heads, ..Default::default() };
            let (store, enc) = stack(cfg, 21);
            let mut rng = ChaCha8Rng::seed_from_u64(heads as u64);
            let x: Vec<f64> = (0..len * 16).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let taped = run(&store, &enc, len, x.clone());
            let fast = enc.eval(&store, &x).unwrap();
            for (a, b) in taped.data().iter().zip(&fast) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
        let (store, enc) = stack(EncoderConfig::default(), 1);
        assert!(matches!(enc.eval(&store, &[]), Err(NnError::EmptySequence)));
    }

    #[test]
    fn permutation_equivariant() {
        let (store, enc) = stack(EncoderConfig::default(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let perm = [3, 0, 4, 1, 2];
        let out = run(&store, &enc, 5, rows.concat());
        let permuted: Vec<f64> = perm.iter().flat_map(|&i| rows[i].clone()).collect();
        let out_p = run(&store, &enc, 5, permuted);
        for (r, &src) in perm.iter().enumerate() {
            for c in 0..16 {
                let a = out.data()[src * 16 + c];
                let b = out_p.data()[r * 16 + c];
                assert!((a - b).abs() < 1e-12, "row {r} col {c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zeroed_output_projections_pass_input_through() {
        let (mut store, enc) = stack(EncoderConfig::default(), 11);
        for layer in &enc.layers {
            for lin in [&layer.attn.out, &layer.fc2] {
                store.get_mut(lin.weight).data_mut().fill(0.0);
                store.get_mut(lin.bias.unwrap()).data_mut().fill(0.0);
            }
        }
        let input: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = run(&store, &enc, 3, input.clone());
        for (a, b) in out.data().iter().zip(&input) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
