use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

/// `sqrt(mean_t ‖ŝₜ − s*ₜ‖²)` for one trajectory; `estimates[t]` is `[d]`.
pub fn supervised_loss<'t>(estimates: &[Var<'t>], truths: &Tensor) -> Result<Var<'t>> {
    if estimates.is_empty() || truths.rank() != 2 || truths.rows() != estimates.len() {
        return Err(Error::shape("supervised_loss", truths.shape(), &[estimates.len()]));
    }
    let tape = estimates[0].tape();
    let d = truths.cols();
    let stacked = Var::concat(estimates, 0)?.reshape(&[estimates.len(), d])?;
    let mse = stacked.sub(tape.constant(truths.clone()))?.square().sum_axis(1)?.mean();
    mse.sqrt()
}

/// Mean of per-trajectory [`supervised_loss`] over a batch.
pub fn batch_supervised_loss<'t>(per_trajectory: &[Var<'t>]) -> Result<Var<'t>> {
    if per_trajectory.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let mut sum = per_trajectory[0];
    for v in &per_trajectory[1..] {
        sum = sum.add(*v)?;
    }
    Ok(sum.scale(1.0 / per_trajectory.len() as f64))
}

/// Plain-number counterpart of [`supervised_loss`].
pub fn rmse(estimates: &[Vec<f64>], truths: &Tensor) -> Result<f64> {
    if truths.rows() != estimates.len() || estimates.is_empty() {
        return Err(Error::shape("rmse", truths.shape(), &[estimates.len()]));
    }
    let sq: f64 = estimates
        .iter()
        .enumerate()
        .map(|(t, e)| e.iter().zip(truths.row(t)).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok((sq / estimates.len() as f64).sqrt())
}

/// `λ₁·S − λ₂·Q/b`.
pub fn total_loss<'t>(supervised: Var<'t>, q: Var<'t>, blocks: usize, lambda1: f64, lambda2: f64) -> Result<Var<'t>> {
    if lambda2 == 0.0 {
        return Ok(supervised.scale(lambda1));
    }
    if blocks == 0 {
        return Err(Error::Config("pseudo-likelihood weight is positive but no block was completed".into()));
    }
    supervised.scale(lambda1).sub(q.scale(lambda2 / blocks as f64))
}
