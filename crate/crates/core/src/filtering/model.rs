use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::nn::Params;

/// One filtering problem: `T` observations and actions, optional truth.
///
/// Row `t` of each tensor belongs to time step `t + 1`; `initial_state` is
/// the state at `t = 0` used to center the initial particle cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `[T, obs_dim]`
    pub observations: Tensor,
    /// `[T, action_dim]`
    pub actions: Tensor,
    /// `[T, d]`
    pub truths: Option<Tensor>,
    pub initial_state: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.observations.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Particles moved from `t − 1` to `t` with the densities needed by the
/// weight update.
pub struct Propagation<'t> {
    /// `[n, d]`
    pub states: Var<'t>,
    /// `log p(sₜ | sₜ₋₁, aₜ)` under the dynamic model, `[n]`.
    pub log_dynamics: Var<'t>,
    /// `log q(sₜ | sₜ₋₁, aₜ, oₜ)` under the proposal, `[n]`.
    pub log_proposal: Var<'t>,
}

/// Model interface consumed by the filtering engine.
pub trait ParticleModel {
    fn state_dim(&self) -> usize;

    /// Per-episode observation features, `[T, k]`; row `t` is used at step `t + 1`.
    fn encode_observations<'t>(&self, tape: &'t Tape, params: &Params<'t>, observations: &Tensor) -> Result<Var<'t>>;

    /// Draw `sₜ` given `sₜ₋₁`. `noise` holds standard-normal draws `[n, d]`.
    fn propagate<'t>(
        &self,
        params: &Params<'t>,
        prev: Var<'t>,
        action: &[f64],
        features: Var<'t>,
        noise: &Tensor,
    ) -> Result<Propagation<'t>>;

    /// `log l(oₜ, sₜ)` per particle. `features` is the `[1, k]` row for this step.
    fn log_likelihood<'t>(&self, params: &Params<'t>, states: Var<'t>, features: Var<'t>) -> Result<Var<'t>>;

    /// Dynamic-model density of given states; used when the lineage of a
    /// particle is re-scored outside the forward pass.
    fn log_dynamics<'t>(&self, params: &Params<'t>, states: Var<'t>, prev: Var<'t>, action: &[f64]) -> Result<Var<'t>>;
}
