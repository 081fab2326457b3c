//! Central finite-difference verification of tape gradients.

mod suite;

use thiserror::Error;

use crate::tensor::{Tape, Tensor, TensorError, Var};

pub use suite::{check_names, run_suite, CheckOutcome, SuiteOptions, SuiteReport};

/// Step used by every check in the suite.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Largest relative error the suite accepts.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// `|a - n| / max(1, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1.0)
}

/// Compares the tape gradient of the scalar `f(x)` against central
/// differences at every element of `x` and returns the largest relative
/// error.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64, GradCheckError>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone(), true);
    let loss = f(&mut tape, leaf)?;
    tape.backward(loss)?;
    let analytic = tape
        .grad(leaf)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape().to_vec()));
    let eval = |probe: &Tensor<f64>| -> Result<f64, TensorError> {
        let mut t = Tape::new();
        let v = t.constant(probe.clone());
        let out = f(&mut t, v)?;
        Ok(t.value(out).item())
    };
    let coords: Vec<usize> = (0..x.len()).collect();
    compare_at(eval, &analytic, x, h, &coords)
}

/// Central differences of `eval` at the listed coordinates of `x`, compared
/// with `analytic`.
pub fn compare_at<E>(
    eval: E,
    analytic: &Tensor<f64>,
    x: &Tensor<f64>,
    h: f64,
    coords: &[usize],
) -> Result<f64, GradCheckError>
where
    E: Fn(&Tensor<f64>) -> Result<f64, TensorError>,
{
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data()[i];
        if !(plus.is_finite() && minus.is_finite() && a.is_finite()) {
            return Err(GradCheckError::NonFinite { index: i });
        }
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_fn(vec![3, 2], |i| i as f64 * 0.37 - 1.0);
        let err = grad_check(|t, v| Ok(t.sum(v)), &x, DEFAULT_STEP).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn tanh_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::from_fn(vec![10], |_| rng.random_range(-2.0..2.0));
        let err = grad_check(
            |t, v| {
                let y = t.tanh(v);
                Ok(t.sum(y))
            },
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn non_finite_reports_index() {
        let x = Tensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        let err = grad_check(|t, v| Ok(t.sum(v)), &x, DEFAULT_STEP).unwrap_err();
        assert!(matches!(err, GradCheckError::NonFinite { index: 0 } | GradCheckError::NonFinite { index: 1 }));
    }
}
