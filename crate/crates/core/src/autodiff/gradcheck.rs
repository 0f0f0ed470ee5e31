use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Compare reverse-mode gradients of a scalar function against central finite
/// differences at `point`.
///
/// Returns `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`. The
/// function is re-evaluated on a fresh tape for every perturbation, so it must
/// be deterministic.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let x = tape.param(point.clone());
    let y = f(&tape, x)?;
    let analytic = tape.backward(y)?.wrt(x);

    let eval = |p: Tensor| -> Result<f64> {
        let tape = Tape::new();
        let x = tape.constant(p);
        Ok(f(&tape, x)?.item())
    };

    let mut worst = 0.0f64;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * step);
        let a = analytic.data()[i];
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}
