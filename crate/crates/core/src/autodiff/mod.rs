//! Dense `f64` tensors with eager-recording reverse-mode differentiation.

mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::finite_difference_check;
pub use optim::{AdamW, AdamWConfig};
pub use params::{Bound, Grads, ParamId, ParamStore};
pub(crate) use tape::softmax_rows;
pub use tape::{gelu, sigmoid, OpKind, Tape, Var, LOG_FLOOR};
pub use tensor::Tensor;
pub(crate) use tensor::matmul;

#[derive(Debug, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {shapes:?}")]
    ShapeMismatch { op: &'static str, shapes: Vec<Vec<usize>> },
    #[error("invalid axis {axis} for {op} on rank-{rank} tensor")]
    InvalidAxis { op: &'static str, axis: usize, rank: usize },
    #[error("{op} is undefined at {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("tape already differentiated; record a new tape")]
    StaleTape,
    #[error("loss must be a scalar, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },
    #[error("missing gradient for parameter `{name}`")]
    MissingGrad { name: String },
    #[error("optimizer state does not match parameter `{name}`")]
    StateMismatch { name: String },
}
