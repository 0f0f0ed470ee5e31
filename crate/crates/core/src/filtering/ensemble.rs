use crate::autodiff::{logsumexp, Tensor, Var};
use crate::error::{Error, Result};

/// Weighted particle set at one time step.
///
/// `states` is `[n, d]`, `log_weights` is `[n]` and normalized
/// (`logsumexp == 0`). `ancestors[i]` is the index at `t - 1` that particle
/// `i` descends from.
#[derive(Clone, Copy, Debug)]
pub struct ParticleEnsemble<'t> {
    pub states: Var<'t>,
    pub log_weights: Var<'t>,
    pub t: usize,
}

impl<'t> ParticleEnsemble<'t> {
    pub fn len(&self) -> usize {
        self.states.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.states.shape()[1]
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.to_vec().into_iter().map(f64::exp).collect()
    }

    pub fn ess(&self) -> f64 {
        ess(&self.log_weights.to_vec())
    }

    /// Weighted particle mean `Σ wᵢ sᵢ`, differentiable in both factors.
    pub fn estimate(&self) -> Result<Var<'t>> {
        let n = self.len();
        let w = self.log_weights.exp().reshape(&[1, n])?;
        w.matmul(self.states)?.reshape(&[self.dim()])
    }

    pub fn detach(self) -> Self {
        ParticleEnsemble {
            states: self.states.detach(),
            log_weights: self.log_weights.detach(),
            t: self.t,
        }
    }

    pub fn snapshot(&self) -> EnsembleSnapshot {
        EnsembleSnapshot {
            states: self.states.to_tensor(),
            log_weights: self.log_weights.to_vec(),
            t: self.t,
        }
    }
}

/// Detached copy of an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSnapshot {
    pub states: Tensor,
    pub log_weights: Vec<f64>,
    pub t: usize,
}

/// Subtract `logsumexp` so the weights sum to one.
pub fn normalize_log_weights<'t>(log_w: Var<'t>, step: usize) -> Result<Var<'t>> {
    let lse = log_w.logsumexp();
    if !lse.item().is_finite() {
        return Err(Error::Degenerate { step });
    }
    log_w.sub(lse)
}

/// Importance weight recursion in log space:
/// `log wₜ = log wₜ₋₁ + log p(sₜ|sₜ₋₁,aₜ) + log l(oₜ,sₜ) − log q(sₜ|sₜ₋₁,aₜ,oₜ)`,
/// followed by normalization.
pub fn update_log_weights<'t>(
    prev: Var<'t>,
    log_dynamics: Var<'t>,
    log_likelihood: Var<'t>,
    log_proposal: Var<'t>,
    step: usize,
) -> Result<Var<'t>> {
    let unnorm = prev.add(log_dynamics)?.add(log_likelihood)?.sub(log_proposal)?;
    normalize_log_weights(unnorm, step)
}

/// Effective sample size `1 / Σ wᵢ²` of normalized log weights.
pub fn ess(log_weights: &[f64]) -> f64 {
    let s: f64 = log_weights.iter().map(|lw| (2.0 * lw).exp()).sum();
    1.0 / s
}

/// Check `|logsumexp| <= tol`.
pub fn is_normalized(log_weights: &[f64], tol: f64) -> bool {
    logsumexp(log_weights).abs() <= tol
}
