//! Central finite-difference oracle for reverse-mode gradients.
//!
//! Uses the fourth-order five-point stencil, so a moderate step keeps both
//! truncation and rounding error far below the acceptance thresholds, even
//! for coordinates whose gradient is tiny.

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Relative error floor used when both gradients are near zero.
pub const REL_FLOOR: f64 = 1e-8;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

fn evaluate<F>(f: &F, point: &Tensor) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let x = tape.constant(point.clone());
    f(&tape, &x)?.item()
}

/// Max relative error between `backward` and central differences over every coordinate.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &Var<'t>) -> Result<Var<'t>>,
{
    let coords: Vec<usize> = (0..point.numel()).collect();
    grad_check_at(f, point, step, &coords)
}

/// As [`grad_check`], restricted to `coords`, for inputs too large to sweep fully.
pub fn grad_check_at<F>(f: F, point: &Tensor, step: f64, coords: &[usize]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &Var<'t>) -> Result<Var<'t>>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("grad_check", format!("step {step}")));
    }
    let analytic = {
        let tape = Tape::new();
        let x = tape.param(point.clone());
        let loss = f(&tape, &x)?;
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                context: "grad_check",
                detail: format!("function value {value} at the base point"),
            });
        }
        tape.backward(&loss)?.wrt(&x)
    };
    let mut worst: f64 = 0.0;
    let mut probe = point.clone();
    for &i in coords {
        if i >= point.numel() {
            return Err(Error::invalid("grad_check", format!("coordinate {i} out of range")));
        }
        let base = point.data()[i];
        let mut at = |offset: f64| -> Result<f64> {
            probe.data_mut()[i] = base + offset;
            evaluate(&f, &probe)
        };
        let values = [at(2.0 * step)?, at(step)?, at(-step)?, at(-2.0 * step)?];
        probe.data_mut()[i] = base;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "grad_check",
                detail: format!("function value at coordinate {i}: f(+2h, +h, -h, -2h) = {values:?}"),
            });
        }
        let [p2, p1, m1, m2] = values;
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_nearly_exact() {
        let err = grad_check(
            |_, x| Ok(x.square().sum()),
            &Tensor::new([1], vec![3.0]).unwrap(),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn non_finite_value_names_the_coordinate() {
        // 1/x at x = 1e-6 with step 1e-5 crosses the pole
        let err = grad_check(
            |tape, x| {
                let one = tape.constant(Tensor::full([2], 1.0));
                let y = one.div(x)?;
                let z = y.mul(&y)?;
                Ok(z.exp().sum())
            },
            &Tensor::new([2], vec![1.0, 1e-6]).unwrap(),
            1e-5,
        );
        match err {
            Err(Error::NonFinite { detail, .. }) => assert!(detail.contains("coordinate 1") || detail.contains("base point"), "{detail}"),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }
}
