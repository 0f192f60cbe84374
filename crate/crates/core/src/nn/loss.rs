use super::NnError;
use crate::autodiff::{Tape, Tensor, Var};

/// Predictions are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]`.
pub const BCE_CLAMP: f64 = 1e-7;
/// Predicted ratios are floored here before the log.
pub const KL_FLOOR: f64 = 1e-8;

/// A scalar loss and its handle on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LossValue {
    pub value: f64,
    pub var: Var,
}

/// Mean binary cross-entropy of `preds` against 0/1 `labels`.
pub fn bce_loss(tape: &mut Tape, preds: Var, labels: &[f64]) -> Result<LossValue, NnError> {
    let n = tape.value(preds).len();
    if n != labels.len() {
        return Err(NnError::LengthMismatch(n, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
        return Err(NnError::InvalidLabel(bad));
    }
    let shape = tape.shape(preds).to_vec();
    let y = tape.constant(Tensor::new(shape.clone(), labels.to_vec()).map_err(NnError::from)?)?;
    let not_y = tape.constant(
        Tensor::new(shape, labels.iter().map(|v| 1.0 - v).collect()).map_err(NnError::from)?,
    )?;
    let f = tape.clamp(preds, BCE_CLAMP, 1.0 - BCE_CLAMP)?;
    let log_f = tape.log(f)?;
    let one_minus = tape.scale(f, -1.0)?;
    let one_minus = tape.add_scalar(one_minus, 1.0)?;
    let log_1mf = tape.log(one_minus)?;
    let a = tape.mul(y, log_f)?;
    let b = tape.mul(not_y, log_1mf)?;
    let ll = tape.add(a, b)?;
    let total = tape.sum(ll)?;
    let var = tape.scale(total, -1.0 / n as f64)?;
    Ok(LossValue { value: tape.value(var).data()[0], var })
}

/// Forward KL divergence `sum_n target_n * ln(target_n / pred_n)`, with
/// `0 * ln 0 = 0` and `pred` floored at [`KL_FLOOR`].
pub fn kl_div(tape: &mut Tape, target: &[f64], pred: Var) -> Result<LossValue, NnError> {
    let n = tape.value(pred).len();
    if n != target.len() {
        return Err(NnError::LengthMismatch(target.len(), n));
    }
    let entropy_term: f64 = target.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum();
    let shape = tape.shape(pred).to_vec();
    let t = tape.constant(Tensor::new(shape, target.to_vec()).map_err(NnError::from)?)?;
    let floored = tape.clamp(pred, KL_FLOOR, f64::INFINITY)?;
    let log_pred = tape.log(floored)?;
    let cross = tape.mul(t, log_pred)?;
    let cross = tape.sum(cross)?;
    let neg = tape.scale(cross, -1.0)?;
    let var = tape.add_scalar(neg, entropy_term)?;
    Ok(LossValue { value: tape.value(var).data()[0], var })
}

/// Plain-value KL divergence with the same conventions as [`kl_div`].
pub fn kl_value(target: &[f64], pred: &[f64]) -> f64 {
    target
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| t * (t.ln() - p.max(KL_FLOOR).ln()))
        .sum()
}
