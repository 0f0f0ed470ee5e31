use rand::Rng;

use super::ensemble::{normalize_log_weights, ParticleEnsemble};
use crate::autodiff::Tensor;
use crate::error::Result;

/// Draw `n` indices i.i.d. from the categorical distribution `probs`
/// (inverse-CDF with binary search).
pub fn multinomial<R: Rng>(probs: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for &p in probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    (0..n)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            cdf.partition_point(|&c| c <= u).min(probs.len() - 1)
        })
        .collect()
}

/// Mixture proposal `vᵢ = β wᵢ + (1 − β)/N`.
pub fn soft_probs(weights: &[f64], beta: f64) -> Vec<f64> {
    let n = weights.len() as f64;
    weights.iter().map(|w| beta * w + (1.0 - beta) / n).collect()
}

/// Soft resampling: ancestors are drawn from `v = β w + (1 − β)/N` and the
/// offspring of `j` carries weight `w_j / v_j`, renormalized.
///
/// Ancestor indices are constants for differentiation; the correction
/// ratio keeps its gradient through `w`.
pub fn soft_resample<'t, R: Rng>(
    ensemble: ParticleEnsemble<'t>,
    beta: f64,
    rng: &mut R,
) -> Result<(ParticleEnsemble<'t>, Vec<usize>)> {
    let n = ensemble.len();
    let tape = ensemble.states.tape();
    let probs = soft_probs(&ensemble.weights(), beta);
    let ancestors = multinomial(&probs, n, rng);

    // log v = log(β w + (1 − β)/N), built on the tape so w keeps its gradient.
    let w = ensemble.log_weights.exp();
    let mix = tape.constant(Tensor::full(&[n], (1.0 - beta) / n as f64));
    let log_v = w.scale(beta).add(mix)?.log()?;
    let corrected = ensemble.log_weights.sub(log_v)?.gather_rows(&ancestors)?;
    let resampled = ParticleEnsemble {
        states: ensemble.states.gather_rows(&ancestors)?,
        log_weights: normalize_log_weights(corrected, ensemble.t)?,
        t: ensemble.t,
    };
    Ok((resampled, ancestors))
}
