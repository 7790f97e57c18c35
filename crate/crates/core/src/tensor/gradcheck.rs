use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|)
    pub max_rel_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub analytic: Tensor,
    pub numeric: Tensor,
}

/// Checks the reverse-mode gradient of a scalar function against central
/// finite differences with step `eps`.
///
/// `f` builds the scalar on the tape it is handed; it must be pure and
/// deterministic because it is re-evaluated twice per coordinate.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::Config(format!("finite-difference step {eps} outside [1e-6, 1e-4]")));
    }
    let analytic = {
        let tape = Tape::new();
        let input = tape.param(x.clone());
        let out = f(&tape, input)?;
        if out.value().len() != 1 {
            return Err(Error::InvalidShape {
                shape: out.shape(),
                reason: "gradient check requires a scalar output".into(),
            });
        }
        if !out.value().is_finite() {
            return Err(Error::NonFinite { index: 0 });
        }
        tape.backward(out)?.wrt(input)
    };

    let evaluate = |probe: Tensor, index: usize| -> Result<f64> {
        let tape = Tape::new();
        let input = tape.constant(probe);
        let value = f(&tape, input)?.value().item();
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonFinite { index })
        }
    };

    let mut numeric = vec![0.0; x.len()];
    let mut probe = x.clone();
    for (i, slot) in numeric.iter_mut().enumerate() {
        let original = x.data()[i];
        probe.data_mut()[i] = original + eps;
        let plus = evaluate(probe.clone(), i)?;
        probe.data_mut()[i] = original - eps;
        let minus = evaluate(probe.clone(), i)?;
        probe.data_mut()[i] = original;
        *slot = (plus - minus) / (2.0 * eps);
    }
    if !analytic.is_finite() {
        let index = analytic.data().iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite { index });
    }

    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (&a, &n)) in analytic.data().iter().zip(&numeric).enumerate() {
        let err = (a - n).abs() / 1f64.max(a.abs()).max(n.abs());
        if err > max_rel_error {
            max_rel_error = err;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        numeric: Tensor::from_parts(x.shape().to_vec(), numeric),
        analytic,
    })
}
