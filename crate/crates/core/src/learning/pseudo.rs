//! Block pseudo-likelihood over particle lineages.
//!
//! For block `b` covering steps `bL+1 ..= (b+1)L`:
//!
//! ```text
//! log ηⁱ = log π(s_{bL+1}) + log l(o_{bL+1}, s_{bL+1})
//!        + Σ_{t=bL+2}^{(b+1)L} [log p(sₜ | sₜ₋₁, aₜ) + log l(oₜ, sₜ)]
//! Q̂      = Σᵢ wⁱ_{(b+1)L} log ηⁱ
//! ```
//!
//! where every term is taken along the ancestry of final particle `i`.

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::filtering::{FilterRun, InitKind, InitialDistribution};
use crate::gaussian;

/// One step of a block as seen by the pseudo-likelihood.
pub struct BlockStep<'a, 't> {
    /// Index into the previous step for each particle; ignored on the
    /// first step of a block.
    pub parents: Option<&'a [usize]>,
    /// Ignored on the first step of a block, where `π` takes its place.
    pub log_dynamics: Var<'t>,
    pub log_likelihood: Var<'t>,
}

/// Per-particle `log ηⁱ`, accumulated forward with a gather on the
/// ancestor indices at each step.
pub fn lineage_log_eta<'t>(log_prior: Var<'t>, steps: &[BlockStep<'_, 't>]) -> Result<Var<'t>> {
    let first = steps
        .first()
        .ok_or_else(|| Error::Config("a block needs at least one step".into()))?;
    let mut acc = log_prior.add(first.log_likelihood)?;
    for s in &steps[1..] {
        if let Some(p) = s.parents {
            acc = acc.gather_rows(p)?;
        }
        acc = acc.add(s.log_dynamics)?.add(s.log_likelihood)?;
    }
    Ok(acc)
}

/// `Q̂ = Σᵢ wⁱ log ηⁱ` with `final_log_weights` the normalized log weights at
/// the last step of the block.
pub fn block_pseudo_likelihood<'t>(
    log_prior: Var<'t>,
    steps: &[BlockStep<'_, 't>],
    final_log_weights: Var<'t>,
) -> Result<Var<'t>> {
    let log_eta = lineage_log_eta(log_prior, steps)?;
    let q = final_log_weights.exp().mul(log_eta)?.sum();
    if !q.item().is_finite() {
        return Err(Error::Numerical("pseudo-likelihood is not finite".into()));
    }
    Ok(q)
}

/// Reference computation with plain numbers: walks each final particle's
/// ancestry backwards and multiplies the densities directly.
///
/// `steps[k] = (parents, dynamics densities, likelihoods)`, all as
/// densities rather than logs.
pub fn direct_product_pseudo_likelihood(
    prior: &[f64],
    steps: &[(Option<Vec<usize>>, Vec<f64>, Vec<f64>)],
    final_weights: &[f64],
) -> f64 {
    let last = steps.len() - 1;
    final_weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let mut idx = i;
            let mut eta = 1.0;
            for k in (0..=last).rev() {
                let (parents, dynamics, likelihood) = &steps[k];
                eta *= likelihood[idx];
                if k == 0 {
                    eta *= prior[idx];
                } else {
                    eta *= dynamics[idx];
                    if let Some(p) = parents {
                        idx = p[idx];
                    }
                }
            }
            w * eta.ln()
        })
        .sum()
}

/// `log π` for the first step of block `block`.
///
/// Block 0 uses the initial distribution around the true initial state.
/// Later blocks use a Gaussian with the initial spread, centered at the
/// (detached) weighted mean at step `bL`.
pub fn block_log_prior<'t>(
    run: &FilterRun<'t>,
    block: usize,
    block_len: usize,
    init: &InitialDistribution,
    initial_state: &[f64],
) -> Result<Var<'t>> {
    let first = block * block_len;
    let states = run.steps[first].ensemble.states;
    let n = states.shape()[0];
    if block == 0 {
        return match init.kind {
            InitKind::Gaussian => init.log_density(states, initial_state),
            // Constant in the parameters; evaluated without a support check
            // since propagated particles may have left the initial box.
            InitKind::Uniform { extent } => {
                let d = initial_state.len() as f64;
                Ok(states.tape().constant(Tensor::full(&[n], -d * extent.ln())))
            }
        };
    }
    let center = run.steps[first - 1].estimate.to_vec();
    let d = center.len();
    let mean = states.tape().constant(Tensor::vector(center)).broadcast_rows(n)?;
    gaussian::log_density(states, mean, &vec![init.sigma; d])
}

/// `Q̂` for block `block` of a recorded run.
pub fn run_block_pseudo_likelihood<'t>(
    run: &FilterRun<'t>,
    block: usize,
    block_len: usize,
    init: &InitialDistribution,
    initial_state: &[f64],
) -> Result<Var<'t>> {
    let start = block * block_len;
    let end = start + block_len;
    if block_len == 0 || end > run.steps.len() {
        return Err(Error::Config(format!(
            "block {block} of length {block_len} exceeds a {}-step run",
            run.steps.len()
        )));
    }
    let prior = block_log_prior(run, block, block_len, init, initial_state)?;
    let steps: Vec<BlockStep<'_, 't>> = run.steps[start..end]
        .iter()
        .map(|s| BlockStep {
            parents: s.parents.as_deref(),
            log_dynamics: s.log_dynamics,
            log_likelihood: s.log_likelihood,
        })
        .collect();
    block_pseudo_likelihood(prior, &steps, run.steps[end - 1].ensemble.log_weights)
        .map_err(|_| Error::Numerical(format!("pseudo-likelihood is not finite in block {block}")))
}

/// Running sum of block pseudo-likelihoods.
#[derive(Clone, Copy, Debug, Default)]
pub struct BlockAccumulator<'t> {
    q: Option<Var<'t>>,
    blocks: usize,
}

impl<'t> BlockAccumulator<'t> {
    pub fn new() -> Self {
        BlockAccumulator { q: None, blocks: 0 }
    }

    /// Add one block's value; a non-finite block is an error.
    pub fn push(&mut self, q: Var<'t>) -> Result<()> {
        if !q.item().is_finite() {
            return Err(Error::Numerical(format!("non-finite pseudo-likelihood in block {}", self.blocks)));
        }
        self.q = Some(match self.q {
            None => q,
            Some(acc) => acc.add(q)?,
        });
        self.blocks += 1;
        Ok(())
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn total(&self) -> Option<Var<'t>> {
        self.q
    }
}
