use super::params::{ParameterStore, Params};
use crate::autodiff::{relative_error, Tape, Var};
use crate::error::Result;

/// Finite-difference check of a scalar function of named parameters.
///
/// At most `per_tensor` evenly spaced entries of each tensor are probed.
/// Returns the worst relative error and the parameter it occurred in.
pub fn grad_check_params<F>(store: &ParameterStore, f: F, step: f64, per_tensor: usize) -> Result<(f64, String)>
where
    F: for<'t> Fn(&'t Tape, &Params<'t>) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let params = store.attach(&tape);
    let y = f(&tape, &params)?;
    let analytic = params.gradients(&tape.backward(y)?);

    let eval = |s: &ParameterStore| -> Result<f64> {
        let tape = Tape::new();
        let p = s.attach_frozen(&tape);
        Ok(f(&tape, &p)?.item())
    };

    let mut worst = (0.0f64, String::new());
    let mut probe = store.clone();
    for (name, value) in store.iter() {
        let n = value.numel();
        let stride = n.div_ceil(per_tensor.max(1)).max(1);
        for i in (0..n).step_by(stride) {
            let x = value.data()[i];
            probe.get_mut(name)?.data_mut()[i] = x + step;
            let plus = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = x - step;
            let minus = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = x;
            let err = relative_error(analytic[name].data()[i], (plus - minus) / (2.0 * step));
            if err > worst.0 {
                worst = (err, name.clone());
            }
        }
    }
    Ok(worst)
}
