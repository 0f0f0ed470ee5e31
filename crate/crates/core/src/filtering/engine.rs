//! Sequential importance sampling with conditional soft resampling.

use rand_distr::{Distribution, StandardNormal};

use super::ensemble::{update_log_weights, ParticleEnsemble};
use super::init::InitialDistribution;
use super::model::{Episode, ParticleModel};
use super::resample::soft_resample;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::Params;
use crate::rng;

/// When the ESS test and resampling happen within a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResampleTiming {
    /// At the start of step `t`, on the weights of `t − 1`, before proposing.
    BeforePropagate,
    /// At the end of step `t`, after the weight update.
    AfterUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterConfig {
    pub n_particles: usize,
    /// Resample when `ESS < n_thres`.
    pub n_thres: f64,
    pub beta: f64,
    pub init: InitialDistribution,
    pub timing: ResampleTiming,
    /// Cut the gradient path every `L` steps (at `t = bL`).
    pub truncate_block: Option<usize>,
}

impl FilterConfig {
    pub fn new(n_particles: usize, init: InitialDistribution) -> Self {
        FilterConfig {
            n_particles,
            n_thres: n_particles as f64 / 2.0,
            beta: 0.5,
            init,
            timing: ResampleTiming::BeforePropagate,
            truncate_block: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Config("n_particles must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        if !(self.n_thres >= 0.0) {
            return Err(Error::Config("n_thres must be non-negative".into()));
        }
        if self.truncate_block == Some(0) {
            return Err(Error::Config("block length must be positive".into()));
        }
        Ok(())
    }
}

/// Everything recorded at one time step `t ≥ 1`.
pub struct StepRecord<'t> {
    pub t: usize,
    /// Particles and normalized weights after the update at `t`.
    pub ensemble: ParticleEnsemble<'t>,
    /// `parents[i]` is the index in step `t − 1` that particle `i` was
    /// propagated from; `None` means the identity.
    pub parents: Option<Vec<usize>>,
    pub log_likelihood: Var<'t>,
    pub log_dynamics: Var<'t>,
    pub log_proposal: Var<'t>,
    /// `[d]`, weighted particle mean after the update.
    pub estimate: Var<'t>,
    pub ess: f64,
    pub resampled: bool,
}

impl StepRecord<'_> {
    pub fn parent(&self, i: usize) -> usize {
        self.parents.as_ref().map_or(i, |p| p[i])
    }
}

pub struct FilterRun<'t> {
    pub initial: ParticleEnsemble<'t>,
    /// `[T, k]` per-step observation features.
    pub features: Option<Var<'t>>,
    pub steps: Vec<StepRecord<'t>>,
}

impl FilterRun<'_> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn estimates(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.estimate.to_vec()).collect()
    }

    pub fn ess_trace(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.ess).collect()
    }

    pub fn resample_count(&self) -> usize {
        self.steps.iter().filter(|s| s.resampled).count()
    }

    /// Euclidean estimate error per step against `truths` `[T, d]`.
    pub fn errors(&self, truths: &Tensor) -> Result<Vec<f64>> {
        if truths.rows() != self.steps.len() {
            return Err(Error::shape("errors", truths.shape(), &[self.steps.len()]));
        }
        Ok(self
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                s.estimate
                    .to_vec()
                    .iter()
                    .zip(truths.row(t))
                    .map(|(e, x)| (e - x).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }
}

/// Standard-normal draws `[n, d]` from the per-step filter stream.
pub fn step_noise(seed: u64, trajectory: u64, t: usize, n: usize, d: usize) -> Tensor {
    let mut r = rng::stream(seed, &[rng::FILTER, trajectory, t as u64]);
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
    Tensor::new(vec![n, d], data).expect("shape matches data")
}

/// Run the filter over one episode.
///
/// Random streams: initial particles from `(INIT, trajectory)`, per-step
/// noise from `(FILTER, trajectory, t)`, resampling from
/// `(RESAMPLE, trajectory, t)`.
#[allow(clippy::too_many_arguments)]
pub fn run_filter<'t, M: ParticleModel + ?Sized>(
    tape: &'t Tape,
    model: &M,
    params: &Params<'t>,
    episode: &Episode,
    cfg: &FilterConfig,
    seed: u64,
    trajectory: u64,
) -> Result<FilterRun<'t>> {
    cfg.validate()?;
    let n = cfg.n_particles;
    let d = model.state_dim();
    if episode.initial_state.len() != d {
        return Err(Error::shape("run_filter", &[episode.initial_state.len()], &[d]));
    }
    let steps = episode.len();
    if episode.actions.rows() != steps {
        return Err(Error::shape("run_filter", episode.actions.shape(), &[steps]));
    }

    let mut init_rng = rng::stream(seed, &[rng::INIT, trajectory]);
    let initial = ParticleEnsemble {
        states: tape.constant(cfg.init.sample(n, &episode.initial_state, &mut init_rng)?),
        log_weights: tape.constant(Tensor::full(&[n], -(n as f64).ln())),
        t: 0,
    };
    let mut run = FilterRun {
        initial,
        features: None,
        steps: Vec::with_capacity(steps),
    };
    if steps == 0 {
        return Ok(run);
    }
    let features = model.encode_observations(tape, params, &episode.observations)?;
    run.features = Some(features);

    let mut current = initial;
    let mut pending_parents: Option<Vec<usize>> = None;
    for t in 1..=steps {
        if let Some(l) = cfg.truncate_block {
            if t > 1 && (t - 1) % l == 0 {
                current = current.detach();
            }
        }
        let mut parents = pending_parents.take();
        let mut resampled = false;
        if cfg.timing == ResampleTiming::BeforePropagate && current.ess() < cfg.n_thres {
            let mut r = rng::stream(seed, &[rng::RESAMPLE, trajectory, t as u64]);
            let (next, ancestors) = soft_resample(current, cfg.beta, &mut r)?;
            current = next;
            parents = Some(ancestors);
            resampled = true;
        }

        let feature = features.slice(0, t - 1, t)?;
        let noise = step_noise(seed, trajectory, t, n, d);
        let prop = model.propagate(params, current.states, episode.actions.row(t - 1), feature, &noise)?;
        let log_likelihood = model.log_likelihood(params, prop.states, feature)?;
        let log_weights = update_log_weights(
            current.log_weights,
            prop.log_dynamics,
            log_likelihood,
            prop.log_proposal,
            t,
        )?;
        let ensemble = ParticleEnsemble {
            states: prop.states,
            log_weights,
            t,
        };
        let estimate = ensemble.estimate()?;
        let ess = ensemble.ess();
        if !estimate.value().is_finite() {
            return Err(Error::Degenerate { step: t });
        }

        current = ensemble;
        if cfg.timing == ResampleTiming::AfterUpdate && ess < cfg.n_thres {
            let mut r = rng::stream(seed, &[rng::RESAMPLE, trajectory, t as u64]);
            let (next, ancestors) = soft_resample(current, cfg.beta, &mut r)?;
            current = next;
            pending_parents = Some(ancestors);
            resampled = true;
        }
        run.steps.push(StepRecord {
            t,
            ensemble,
            parents,
            log_likelihood,
            log_dynamics: prop.log_dynamics,
            log_proposal: prop.log_proposal,
            estimate,
            ess,
            resampled,
        });
    }
    Ok(run)
}
