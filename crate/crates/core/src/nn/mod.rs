//! Transformer encoder building blocks and training losses.

mod encoder;
mod layers;
mod loss;

pub use encoder::{EncoderConfig, EncoderLayer, EncoderStack, MultiHeadAttention};
pub use layers::{LayerNorm, Linear};
pub use loss::{bce_loss, kl_div, kl_value, LossValue, BCE_CLAMP, KL_FLOOR};

use crate::autodiff::{AutodiffError, Tape, Tensor, Var};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("empty token sequence")]
    EmptySequence,
    #[error("expected tokens of shape [len, {expected}], got {got:?}")]
    TokenShape { expected: usize, got: Vec<usize> },
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid encoder configuration: {0}")]
    Config(String),
}

/// Arithmetic mean over the sequence axis of a `[len, dim]` tensor.
pub fn mean_pool(tape: &mut Tape, tokens: Var) -> Result<Var, NnError> {
    let shape = tape.shape(tokens);
    if shape.len() != 2 {
        return Err(NnError::TokenShape { expected: shape.last().copied().unwrap_or(0), got: shape.to_vec() });
    }
    if shape[0] == 0 {
        return Err(NnError::EmptySequence);
    }
    Ok(tape.mean(tokens, 0)?)
}

/// Sinusoidal encodings for positions `0..len`, shape `[len, dim]`.
/// Even columns carry `sin(pos / 10000^(2i/dim))`, odd columns the cosine.
pub fn positional_encoding(len: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(&[len, dim]);
    let data = t.data_mut();
    for pos in 0..len {
        for i in (0..dim).step_by(2) {
            let freq = 10000f64.powf(-(i as f64) / dim as f64);
            let angle = pos as f64 * freq;
            data[pos * dim + i] = angle.sin();
            if i + 1 < dim {
                data[pos * dim + i + 1] = angle.cos();
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(rows: usize, data: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let dim = data.len() / rows.max(1);
        let x = tape.leaf(Tensor::matrix(rows, dim, data).unwrap()).unwrap();
        let p = mean_pool(&mut tape, x).unwrap();
        tape.value(p).data().to_vec()
    }

    #[test]
    fn mean_pool_examples() {
        assert_eq!(pool(2, vec![1.0, 2.0, 3.0, 4.0]), vec![2.0, 3.0]);
        assert_eq!(pool(1, vec![0.5, -0.25]), vec![0.5, -0.25]);
        let v = [0.1, 0.7, -0.3];
        let pooled = pool(100, v.repeat(100));
        for (a, b) in pooled.iter().zip(v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pool_empty_is_error() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[0, 4])).unwrap();
        assert!(matches!(mean_pool(&mut tape, x), Err(NnError::EmptySequence)));
    }

    #[test]
    fn positional_encoding_examples() {
        let pe = positional_encoding(3, 16);
        assert_eq!(&pe.data()[0..2], &[0.0, 1.0]);
        assert_ne!(&pe.data()[0..16], &pe.data()[16..32]);
        assert_eq!(pe, positional_encoding(3, 16));
    }
}
