use super::{AutodiffError, Tape, Tensor, Var};

/// Compares the tape gradient of `f` at `x` against central differences
/// with step `h`. Returns the largest
/// `|analytic - numeric| / max(|analytic|, 1e-8)` over coordinates.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, Var) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone())?;
    let loss = f(&mut tape, xv)?;
    tape.backward(loss)?;
    let analytic = tape.grad(xv).map(Tensor::into_data).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |point: Tensor| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let v = tape.leaf(point)?;
        let out = f(&mut tape, v)?;
        tape.value(out)
            .item()
            .ok_or_else(|| AutodiffError::NonScalarLoss { shape: tape.shape(out).to_vec() })
    };

    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = finite_difference_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                t.sum(sq)
            },
            &Tensor::vector(vec![3.0]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn softmax_dot_matches_differences() {
        let c = Tensor::vector(vec![1.0, -1.0]);
        let err = finite_difference_check(
            move |t, z| {
                let s = t.softmax(z, 0)?;
                let cv = t.constant(c.clone())?;
                let p = t.mul(s, cv)?;
                t.sum(p)
            },
            &Tensor::vector(vec![0.0, 0.0]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        // clamp zeroes the gradient while the numeric derivative straddles the kink
        let err = finite_difference_check(
            |t, x| {
                let c = t.clamp(x, 0.0, 1.0)?;
                t.sum(c)
            },
            &Tensor::vector(vec![1.0 + 1e-7]),
            1e-5,
        )
        .unwrap();
        assert!(err > 0.1);
    }
}
