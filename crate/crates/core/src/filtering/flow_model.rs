//! Flow-augmented dynamic model, conditional-flow proposal and cosine
//! measurement model.
//!
//! A particle is moved in three stages:
//!
//! 1. prototype: `s̃ = s + f(s, a) + σ ⊙ ε`, `ε ~ N(0, I)`
//! 2. dynamic flow: `ŝ = T(s̃)`
//! 3. proposal flow: `s = G(ŝ, eₜ)` with `eₜ` the observation embedding
//!
//! so that `log q(s) = log g(s̃) − log|det J_T(s̃)| − log|det J_G(ŝ)|` and
//! `log p(s) = log g(T⁻¹(s)) − log|det J_T(T⁻¹(s))|`.
//!
//! Both flows act on normalized coordinates `(s − center) / scale`. The
//! conjugating affine map cancels in every Jacobian determinant.

use rand::Rng;

use super::model::{ParticleModel, Propagation};
use crate::autodiff::{Tape, Tensor, Var};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::flows::FlowStack;
use crate::gaussian;
use crate::nn::{Encoder, Mlp, Normalizer, ParameterStore, Params};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub obs_dim: usize,
    pub obs_channels: usize,
    pub embed_dim: usize,
    pub obs_hidden: Vec<usize>,
    pub state_hidden: Vec<usize>,
    pub action_hidden: Vec<usize>,
    pub flow_layers: usize,
    pub flow_hidden: Vec<usize>,
    /// Enables both the dynamic flow `T` and the proposal flow `G`.
    pub flows: bool,
    pub sigma_dyn: Vec<f64>,
    /// Floor on the cosine distance.
    pub eps_d: f64,
    pub state_center: Vec<f64>,
    pub state_scale: Vec<f64>,
}

impl ModelConfig {
    /// Defaults for the disk-tracking task on `image_size²` RGB frames.
    pub fn for_frames(image_size: usize, sigma_dyn: f64) -> Self {
        let half = image_size as f64 / 2.0;
        ModelConfig {
            state_dim: 2,
            action_dim: 2,
            obs_dim: image_size * image_size * 3,
            obs_channels: 3,
            embed_dim: 32,
            obs_hidden: vec![128],
            state_hidden: vec![64],
            action_hidden: vec![32],
            flow_layers: 4,
            flow_hidden: vec![32],
            flows: true,
            sigma_dyn: vec![sigma_dyn; 2],
            eps_d: 1e-6,
            state_center: vec![half; 2],
            state_scale: vec![half; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sigma_dyn.len() != self.state_dim || self.sigma_dyn.iter().any(|&s| !(s > 0.0)) {
            return bad(format!("sigma_dyn must hold {} positive values", self.state_dim));
        }
        if self.state_center.len() != self.state_dim || self.state_scale.len() != self.state_dim {
            return bad("state normalization has the wrong dimension".into());
        }
        if self.state_scale.iter().any(|&s| !(s > 0.0)) {
            return bad("state_scale must be positive".into());
        }
        if !(self.eps_d > 0.0) {
            return bad("eps_d must be positive".into());
        }
        if self.flows && (self.flow_layers == 0 || self.state_dim < 2) {
            return bad("flows need at least one layer and state_dim >= 2".into());
        }
        if self.obs_channels == 0 || self.obs_dim % self.obs_channels != 0 {
            return bad("obs_dim must be a multiple of obs_channels".into());
        }
        Ok(())
    }

    fn list(v: &[usize]) -> String {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }

    fn flist(v: &[f64]) -> String {
        v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
    }

    pub fn export(&self, c: &mut Container) {
        c.set_meta("model.state_dim", self.state_dim);
        c.set_meta("model.action_dim", self.action_dim);
        c.set_meta("model.obs_dim", self.obs_dim);
        c.set_meta("model.obs_channels", self.obs_channels);
        c.set_meta("model.embed_dim", self.embed_dim);
        c.set_meta("model.obs_hidden", Self::list(&self.obs_hidden));
        c.set_meta("model.state_hidden", Self::list(&self.state_hidden));
        c.set_meta("model.action_hidden", Self::list(&self.action_hidden));
        c.set_meta("model.flow_layers", self.flow_layers);
        c.set_meta("model.flow_hidden", Self::list(&self.flow_hidden));
        c.set_meta("model.flows", self.flows);
        c.set_meta("model.sigma_dyn", Self::flist(&self.sigma_dyn));
        c.set_meta("model.eps_d", format!("{:?}", self.eps_d));
        c.set_meta("model.state_center", Self::flist(&self.state_center));
        c.set_meta("model.state_scale", Self::flist(&self.state_scale));
    }

    pub fn import(c: &Container) -> Result<Self> {
        fn parse_list<T: std::str::FromStr>(raw: &str) -> Result<Vec<T>> {
            if raw.is_empty() {
                return Ok(Vec::new());
            }
            raw.split(',')
                .map(|x| x.parse().map_err(|_| Error::Format(format!("bad list `{raw}`"))))
                .collect()
        }
        Ok(ModelConfig {
            state_dim: c.meta_parse("model.state_dim")?,
            action_dim: c.meta_parse("model.action_dim")?,
            obs_dim: c.meta_parse("model.obs_dim")?,
            obs_channels: c.meta_parse("model.obs_channels")?,
            embed_dim: c.meta_parse("model.embed_dim")?,
            obs_hidden: parse_list(c.meta("model.obs_hidden")?)?,
            state_hidden: parse_list(c.meta("model.state_hidden")?)?,
            action_hidden: parse_list(c.meta("model.action_hidden")?)?,
            flow_layers: c.meta_parse("model.flow_layers")?,
            flow_hidden: parse_list(c.meta("model.flow_hidden")?)?,
            flows: c.meta_parse("model.flows")?,
            sigma_dyn: parse_list(c.meta("model.sigma_dyn")?)?,
            eps_d: c.meta_parse("model.eps_d")?,
            state_center: parse_list(c.meta("model.state_center")?)?,
            state_scale: parse_list(c.meta("model.state_scale")?)?,
        })
    }
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

/// Prototype transition `g(s̃ | s, a)`: learned relative motion plus diagonal
/// Gaussian noise.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeDynamics {
    pub action_net: Mlp,
    pub sigma: Vec<f64>,
    state_norm: Normalizer,
}

impl PrototypeDynamics {
    /// `f(s, a)` for every particle, `[n, d]`.
    pub fn motion<'t>(&self, params: &Params<'t>, prev: Var<'t>, action: &[f64]) -> Result<Var<'t>> {
        let n = prev.shape()[0];
        let a = prev.tape().constant(Tensor::vector(action.to_vec())).broadcast_rows(n)?;
        let input = Var::concat(&[self.state_norm.apply_var(prev)?, a], 1)?;
        self.action_net.forward(params, input)
    }

    /// Sample `s̃ = s + f(s, a) + σ ⊙ ε` and return it with `log g(s̃ | s, a)`,
    /// evaluated at the drawn `ε`.
    pub fn propagate<'t>(
        &self,
        params: &Params<'t>,
        prev: Var<'t>,
        action: &[f64],
        noise: &Tensor,
    ) -> Result<(Var<'t>, Var<'t>)> {
        let tape = prev.tape();
        let d = self.sigma.len();
        let scaled: Vec<f64> = noise
            .data()
            .iter()
            .enumerate()
            .map(|(i, e)| e * self.sigma[i % d])
            .collect();
        let eps = tape.constant(Tensor::new(noise.shape().to_vec(), scaled)?);
        let moved = prev.add(self.motion(params, prev, action)?)?.add(eps)?;
        let log_g = gaussian::standardized_log_density(eps, &self.sigma)?;
        Ok((moved, log_g))
    }

    /// `log g(x | s, a)` for given `x`.
    pub fn log_density<'t>(&self, params: &Params<'t>, x: Var<'t>, prev: Var<'t>, action: &[f64]) -> Result<Var<'t>> {
        let mean = prev.add(self.motion(params, prev, action)?)?;
        gaussian::log_density(x, mean, &self.sigma)
    }
}

/// `l(o, s) = 1 / max(ε_d, 1 − cos(ĥ(s), h(o)))`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementModel {
    pub obs_encoder: Encoder,
    pub state_encoder: Encoder,
    pub eps_d: f64,
}

impl MeasurementModel {
    /// Per-particle `log l = −log D` with `D` the floored cosine distance
    /// between `ĥ(sᵢ)` and the observation embedding `[1, E]`.
    pub fn log_likelihood<'t>(&self, params: &Params<'t>, states: Var<'t>, embedding: Var<'t>) -> Result<Var<'t>> {
        let n = states.shape()[0];
        let e_state = self.state_encoder.encode_var(params, states)?;
        cosine_log_likelihood(e_state, embedding, self.eps_d, n)
    }
}

/// `−log max(ε_d, 1 − cos(aᵢ, b))` for rows `aᵢ` of `[n, E]` and `b: [1, E]`.
pub fn cosine_log_likelihood<'t>(rows: Var<'t>, target: Var<'t>, eps_d: f64, n: usize) -> Result<Var<'t>> {
    let row_norms = rows.square().sum_axis(1)?.sqrt()?;
    let target_norm = target.square().sum().sqrt()?;
    if target_norm.item() == 0.0 || row_norms.value().data().contains(&0.0) {
        return Err(Error::Numerical("zero-norm embedding in cosine distance".into()));
    }
    let dots = rows.matmul(target.transpose()?)?.reshape(&[n])?;
    let cos = dots.div(row_norms)?.div(target_norm)?;
    let floor = rows.tape().scalar(eps_d);
    let dist = cos.neg().shift(1.0).maximum(floor)?;
    Ok(dist.log()?.neg())
}

/// Change-of-variables proposal density: `log g − log|det J_T| − log|det J_G|`.
pub fn proposal_log_density<'t>(base: Var<'t>, logdet_t: Var<'t>, logdet_g: Var<'t>) -> Result<Var<'t>> {
    base.sub(logdet_t)?.sub(logdet_g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub config: ModelConfig,
    pub dynamics: PrototypeDynamics,
    pub transition_flow: Option<FlowStack>,
    pub proposal_flow: Option<FlowStack>,
    pub measurement: MeasurementModel,
    state_norm: Normalizer,
}

impl FlowModel {
    pub fn new(config: ModelConfig, obs_norm: Normalizer) -> Result<Self> {
        config.validate()?;
        if obs_norm.channels() != config.obs_channels {
            return Err(Error::Config("observation normalizer channel count mismatch".into()));
        }
        let d = config.state_dim;
        let state_norm = Normalizer {
            mean: config.state_center.clone(),
            std: config.state_scale.clone(),
        };
        let dynamics = PrototypeDynamics {
            action_net: Mlp::new("dyn.action", &widths(d + config.action_dim, &config.action_hidden, d))?,
            sigma: config.sigma_dyn.clone(),
            state_norm: state_norm.clone(),
        };
        let (transition_flow, proposal_flow) = if config.flows {
            (
                Some(FlowStack::standard("flow.T", d, config.flow_layers, &config.flow_hidden, None)?),
                Some(FlowStack::standard(
                    "flow.G",
                    d,
                    config.flow_layers,
                    &config.flow_hidden,
                    Some(config.embed_dim),
                )?),
            )
        } else {
            (None, None)
        };
        let measurement = MeasurementModel {
            obs_encoder: Encoder::new("meas.obs", &widths(config.obs_dim, &config.obs_hidden, config.embed_dim), obs_norm)?,
            state_encoder: Encoder::new(
                "meas.state",
                &widths(d, &config.state_hidden, config.embed_dim),
                state_norm.clone(),
            )?,
            eps_d: config.eps_d,
        };
        Ok(FlowModel {
            config,
            dynamics,
            transition_flow,
            proposal_flow,
            measurement,
            state_norm,
        })
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        self.dynamics.action_net.init(store, rng, false)?;
        if let Some(t) = &self.transition_flow {
            t.init(store, rng)?;
        }
        if let Some(g) = &self.proposal_flow {
            g.init(store, rng)?;
        }
        self.measurement.obs_encoder.init(store, rng)?;
        self.measurement.state_encoder.init(store, rng)
    }

    pub fn obs_normalizer(&self) -> &Normalizer {
        &self.measurement.obs_encoder.norm
    }

    pub fn export(&self, c: &mut Container) {
        self.config.export(c);
        let norm = self.obs_normalizer();
        c.insert("buffer/obs_mean", Tensor::vector(norm.mean.clone()));
        c.insert("buffer/obs_std", Tensor::vector(norm.std.clone()));
    }

    pub fn import(c: &Container) -> Result<Self> {
        let config = ModelConfig::import(c)?;
        let norm = Normalizer {
            mean: c.tensor("buffer/obs_mean")?.data().to_vec(),
            std: c.tensor("buffer/obs_std")?.data().to_vec(),
        };
        Self::new(config, norm)
    }

    fn to_flow_space<'t>(&self, s: Var<'t>) -> Result<Var<'t>> {
        self.state_norm.apply_var(s)
    }

    fn from_flow_space<'t>(&self, z: Var<'t>) -> Result<Var<'t>> {
        let n = z.shape()[0];
        let tape = z.tape();
        let scale = tape.constant(Tensor::vector(self.state_norm.std.clone())).broadcast_rows(n)?;
        let center = tape.constant(Tensor::vector(self.state_norm.mean.clone())).broadcast_rows(n)?;
        z.mul(scale)?.add(center)
    }

    /// `ŝ = T(s̃)` and `log|det J_T(s̃)|`; the identity when flows are disabled.
    pub fn dynamics_transform<'t>(&self, params: &Params<'t>, s_tilde: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let n = s_tilde.shape()[0];
        match &self.transition_flow {
            None => Ok((s_tilde, s_tilde.tape().constant(Tensor::zeros(&[n])))),
            Some(flow) => {
                let (z, ld) = flow.forward(params, self.to_flow_space(s_tilde)?, None)?;
                Ok((self.from_flow_space(z)?, ld))
            }
        }
    }

    /// `s = G(ŝ, eₜ)` and `log|det J_G(ŝ)|`.
    pub fn propose<'t>(&self, params: &Params<'t>, s_hat: Var<'t>, embedding: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        let n = s_hat.shape()[0];
        match &self.proposal_flow {
            None => Ok((s_hat, s_hat.tape().constant(Tensor::zeros(&[n])))),
            Some(flow) => {
                let (z, ld) = flow.forward(params, self.to_flow_space(s_hat)?, Some(embedding))?;
                Ok((self.from_flow_space(z)?, ld))
            }
        }
    }

    /// `G⁻¹(s, eₜ)`.
    pub fn propose_inverse<'t>(&self, params: &Params<'t>, s: Var<'t>, embedding: Var<'t>) -> Result<Var<'t>> {
        match &self.proposal_flow {
            None => Ok(s),
            Some(flow) => {
                let (z, _) = flow.inverse(params, self.to_flow_space(s)?, Some(embedding))?;
                self.from_flow_space(z)
            }
        }
    }

    /// `log p(sₜ | sₜ₋₁, aₜ) = log g(T⁻¹(sₜ) | ·) − log|det J_T(T⁻¹(sₜ))|`.
    pub fn dynamics_log_density<'t>(
        &self,
        params: &Params<'t>,
        states: Var<'t>,
        prev: Var<'t>,
        action: &[f64],
    ) -> Result<Var<'t>> {
        match &self.transition_flow {
            None => self.dynamics.log_density(params, states, prev, action),
            Some(flow) => {
                let (z, inv_logdet) = flow.inverse(params, self.to_flow_space(states)?, None)?;
                let preimage = self.from_flow_space(z)?;
                self.dynamics.log_density(params, preimage, prev, action)?.add(inv_logdet)
            }
        }
    }
}

impl ParticleModel for FlowModel {
    fn state_dim(&self) -> usize {
        self.config.state_dim
    }

    fn encode_observations<'t>(&self, tape: &'t Tape, params: &Params<'t>, observations: &Tensor) -> Result<Var<'t>> {
        if observations.rank() != 2 || observations.cols() != self.config.obs_dim {
            return Err(Error::shape("encode_observations", observations.shape(), &[self.config.obs_dim]));
        }
        self.measurement.obs_encoder.encode(tape, params, observations)
    }

    fn propagate<'t>(
        &self,
        params: &Params<'t>,
        prev: Var<'t>,
        action: &[f64],
        features: Var<'t>,
        noise: &Tensor,
    ) -> Result<Propagation<'t>> {
        let (s_tilde, log_g) = self.dynamics.propagate(params, prev, action, noise)?;
        if !self.config.flows {
            // Bootstrap: proposal and dynamic densities coincide.
            return Ok(Propagation {
                states: s_tilde,
                log_dynamics: log_g,
                log_proposal: log_g,
            });
        }
        let (s_hat, logdet_t) = self.dynamics_transform(params, s_tilde)?;
        let (states, logdet_g) = self.propose(params, s_hat, features)?;
        let log_proposal = proposal_log_density(log_g, logdet_t, logdet_g)?;
        let log_dynamics = self.dynamics_log_density(params, states, prev, action)?;
        Ok(Propagation {
            states,
            log_dynamics,
            log_proposal,
        })
    }

    fn log_likelihood<'t>(&self, params: &Params<'t>, states: Var<'t>, features: Var<'t>) -> Result<Var<'t>> {
        self.measurement.log_likelihood(params, states, features)
    }

    fn log_dynamics<'t>(&self, params: &Params<'t>, states: Var<'t>, prev: Var<'t>, action: &[f64]) -> Result<Var<'t>> {
        self.dynamics_log_density(params, states, prev, action)
    }
}
