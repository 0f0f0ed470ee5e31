use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::losses::{batch_supervised_loss, rmse, supervised_loss, total_loss};
use super::pseudo::{run_block_pseudo_likelihood, BlockAccumulator};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::filtering::{run_filter, Episode, FilterConfig, FlowModel, InitialDistribution};
use crate::nn::{Adam, ParameterStore, Params};
use crate::rng;

/// The four compared filters: flows on/off crossed with supervised-only or
/// semi-supervised training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Dpf,
    Sdpf,
    CnfDpf,
    CnfSdpf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Dpf, Method::Sdpf, Method::CnfDpf, Method::CnfSdpf];

    pub fn flows(self) -> bool {
        matches!(self, Method::CnfDpf | Method::CnfSdpf)
    }

    pub fn semi_supervised(self) -> bool {
        matches!(self, Method::Sdpf | Method::CnfSdpf)
    }

    /// Set `flows` and `lambda2` consistently with the method. A
    /// semi-supervised method keeps a positive configured `lambda2` and
    /// falls back to the default otherwise.
    pub fn configure(self, cfg: &mut TrainConfig) {
        cfg.flows = self.flows();
        cfg.lambda2 = if self.semi_supervised() {
            if cfg.lambda2 > 0.0 {
                cfg.lambda2
            } else {
                TrainConfig::default().lambda2
            }
        } else {
            0.0
        };
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Dpf => "dpf",
            Method::Sdpf => "sdpf",
            Method::CnfDpf => "cnf-dpf",
            Method::CnfSdpf => "cnf-sdpf",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpf" => Ok(Method::Dpf),
            "sdpf" => Ok(Method::Sdpf),
            "cnf-dpf" => Ok(Method::CnfDpf),
            "cnf-sdpf" => Ok(Method::CnfSdpf),
            _ => Err(Error::Config(format!("unknown method `{s}` (expected dpf, sdpf, cnf-dpf or cnf-sdpf)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub block_len: usize,
    pub beta: f64,
    pub n_particles: usize,
    /// Defaults to `n_particles / 2`.
    pub n_thres: Option<f64>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub flows: bool,
    /// Spread of the initial particle cloud around the true initial state.
    pub init_sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 1.0,
            lambda2: 0.01,
            lr: 1e-3,
            block_len: 5,
            beta: 0.5,
            n_particles: 50,
            n_thres: None,
            batch_size: 8,
            epochs: 10,
            seed: 0,
            flows: true,
            init_sigma: 2.0,
        }
    }
}

impl TrainConfig {
    pub fn semi_supervised(&self) -> bool {
        self.lambda2 > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return bad("lambda1 and lambda2 must be non-negative");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.block_len == 0 {
            return bad("block_len must be positive");
        }
        if !(self.init_sigma > 0.0) {
            return bad("init_sigma must be positive");
        }
        self.filter_config().validate()
    }

    pub fn filter_config(&self) -> FilterConfig {
        let mut f = FilterConfig::new(self.n_particles, InitialDistribution::gaussian(self.init_sigma));
        f.beta = self.beta;
        if let Some(t) = self.n_thres {
            f.n_thres = t;
        }
        if self.semi_supervised() {
            f.truncate_block = Some(self.block_len);
        }
        f
    }
}

/// One row of the metrics history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_rmse: f64,
    pub val_rmse: f64,
    pub mean_ess: f64,
    pub loss: f64,
    /// Mean over training trajectories of `Q / b`; zero without the
    /// pseudo-likelihood term.
    pub q_term: f64,
}

impl EpochMetrics {
    pub const HEADER: &'static str = "epoch,train_rmse,val_rmse,mean_ess,loss,q_term";

    pub fn to_row(&self) -> [f64; 6] {
        [
            self.epoch as f64,
            self.train_rmse,
            self.val_rmse,
            self.mean_ess,
            self.loss,
            self.q_term,
        ]
    }

    pub fn from_row(r: &[f64]) -> Self {
        EpochMetrics {
            epoch: r[0] as usize,
            train_rmse: r[1],
            val_rmse: r[2],
            mean_ess: r[3],
            loss: r[4],
            q_term: r[5],
        }
    }
}

pub fn write_metrics<W: Write>(history: &[EpochMetrics], mut out: W) -> Result<()> {
    writeln!(out, "{}", EpochMetrics::HEADER)?;
    for m in history {
        writeln!(
            out,
            "{},{:?},{:?},{:?},{:?},{:?}",
            m.epoch, m.train_rmse, m.val_rmse, m.mean_ess, m.loss, m.q_term
        )?;
    }
    Ok(())
}

pub fn read_metrics<R: BufRead>(input: R) -> Result<Vec<EpochMetrics>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Format("empty metrics file".into()))??;
    if header != EpochMetrics::HEADER {
        return Err(Error::Format(format!("unexpected metrics header `{header}`")));
    }
    lines
        .map(|line| {
            let line = line?;
            let vals: Vec<f64> = line
                .split(',')
                .map(|x| x.parse().map_err(|_| Error::Format(format!("bad metrics row `{line}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != 6 {
                return Err(Error::Format(format!("bad metrics row `{line}`")));
            }
            Ok(EpochMetrics::from_row(&vals))
        })
        .collect()
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParameterStore,
    pub optimizer: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub best_params: ParameterStore,
    pub best_epoch: usize,
    pub best_val: f64,
    pub history: Vec<EpochMetrics>,
}

impl TrainState {
    pub fn fresh(params: ParameterStore, lr: f64) -> Self {
        TrainState {
            best_params: params.clone(),
            params,
            optimizer: Adam::new(lr),
            epoch: 0,
            best_epoch: 0,
            best_val: f64::INFINITY,
            history: Vec::new(),
        }
    }
}

/// Filtering result for one evaluated trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryEval {
    pub estimates: Vec<Vec<f64>>,
    /// Euclidean error per step.
    pub errors: Vec<f64>,
    pub rmse: f64,
    pub ess: Vec<f64>,
}

/// Run the filter with frozen parameters on every episode.
pub fn evaluate(
    model: &FlowModel,
    params: &ParameterStore,
    episodes: &[Episode],
    cfg: &FilterConfig,
    seed: u64,
) -> Result<Vec<TrajectoryEval>> {
    episodes
        .iter()
        .enumerate()
        .map(|(i, ep)| {
            let tape = Tape::new();
            let p = params.attach_frozen(&tape);
            let run = run_filter(&tape, model, &p, ep, cfg, seed, i as u64)?;
            let truths = ep
                .truths
                .as_ref()
                .ok_or_else(|| Error::Config("evaluation episode has no ground truth".into()))?;
            let estimates = run.estimates();
            Ok(TrajectoryEval {
                errors: run.errors(truths)?,
                rmse: rmse(&estimates, truths)?,
                ess: run.ess_trace(),
                estimates,
            })
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Objective terms for one filtered trajectory.
pub struct TrajectoryLoss<'t> {
    pub loss: Var<'t>,
    pub supervised: Var<'t>,
    /// Sum of block pseudo-likelihoods; zero when not semi-supervised.
    pub q: Var<'t>,
    pub blocks: usize,
    pub ess: Vec<f64>,
}

/// Filter `episode` and combine the supervised and pseudo-likelihood terms.
#[allow(clippy::too_many_arguments)]
pub fn trajectory_loss<'t>(
    tape: &'t Tape,
    model: &FlowModel,
    params: &Params<'t>,
    episode: &Episode,
    cfg: &TrainConfig,
    fcfg: &FilterConfig,
    seed: u64,
    trajectory: u64,
) -> Result<TrajectoryLoss<'t>> {
    let truths = episode
        .truths
        .as_ref()
        .ok_or_else(|| Error::Config("training episode has no ground truth".into()))?;
    let run = run_filter(tape, model, params, episode, fcfg, seed, trajectory)?;
    let estimates: Vec<Var<'_>> = run.steps.iter().map(|s| s.estimate).collect();
    let supervised = supervised_loss(&estimates, truths)?;
    let mut acc = BlockAccumulator::new();
    if cfg.semi_supervised() {
        for block in 0..episode.len() / cfg.block_len {
            acc.push(run_block_pseudo_likelihood(
                &run,
                block,
                cfg.block_len,
                &fcfg.init,
                &episode.initial_state,
            )?)?;
        }
    }
    let q = acc.total().unwrap_or_else(|| tape.scalar(0.0));
    Ok(TrajectoryLoss {
        loss: total_loss(supervised, q, acc.blocks(), cfg.lambda1, cfg.lambda2)?,
        supervised,
        q,
        blocks: acc.blocks(),
        ess: run.ess_trace(),
    })
}

/// Seed of the validation filter, fixed across epochs so scores compare.
pub fn validation_seed(seed: u64) -> u64 {
    rng::derive(seed, &[rng::EVAL])
}

/// Train until `cfg.epochs` epochs are complete, continuing from `state`.
///
/// Each epoch draws its shuffle and filter randomness from streams keyed
/// by `(seed, epoch)`, so a resumed run retraces an uninterrupted one.
pub fn train(
    model: &FlowModel,
    mut state: TrainState,
    train_set: &[Episode],
    val_set: &[Episode],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainState> {
    cfg.validate()?;
    if model.config.flows != cfg.flows {
        return Err(Error::Config("model flow setting does not match the training config".into()));
    }
    if train_set.is_empty() && cfg.epochs > state.epoch {
        return Err(Error::Config("empty training set".into()));
    }
    if cfg.semi_supervised() {
        if let Some(ep) = train_set.iter().find(|e| e.len() % cfg.block_len != 0) {
            return Err(Error::Config(format!(
                "block length {} does not divide episode length {}",
                cfg.block_len,
                ep.len()
            )));
        }
    }
    let fcfg = cfg.filter_config();
    state.optimizer.lr = cfg.lr;

    while state.epoch < cfg.epochs {
        let epoch = state.epoch + 1;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[rng::SHUFFLE, epoch as u64]));
        let filter_seed = rng::derive(cfg.seed, &[rng::TRAIN, epoch as u64]);

        let mut rmses = Vec::new();
        let mut ess = Vec::new();
        let mut losses = Vec::new();
        let mut q_terms = Vec::new();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let tape = Tape::new();
            let params = state.params.attach(&tape);
            let mut per_traj = Vec::with_capacity(batch.len());
            for &i in batch {
                let tl = trajectory_loss(&tape, model, &params, &train_set[i], cfg, &fcfg, filter_seed, i as u64)?;
                rmses.push(tl.supervised.item());
                ess.extend(tl.ess);
                if tl.blocks > 0 {
                    q_terms.push(tl.q.item() / tl.blocks as f64);
                }
                per_traj.push(tl.loss);
            }
            let loss = batch_supervised_loss(&per_traj)?;
            if !loss.item().is_finite() {
                return Err(Error::Numerical(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            losses.push(loss.item());
            let grads = tape.backward(loss)?;
            state.optimizer.step(&mut state.params, &params.gradients(&grads))?;
        }

        let val = evaluate(model, &state.params, val_set, &fcfg, validation_seed(cfg.seed))?;
        let val_rmse = mean(val.iter().map(|v| v.rmse));
        let metrics = EpochMetrics {
            epoch,
            train_rmse: mean(rmses),
            val_rmse,
            mean_ess: mean(ess),
            loss: mean(losses),
            q_term: if q_terms.is_empty() { 0.0 } else { mean(q_terms) },
        };
        // Without a validation set, keep the latest parameters.
        let score = if val_set.is_empty() { metrics.train_rmse } else { val_rmse };
        if val_set.is_empty() || score < state.best_val {
            state.best_val = score;
            state.best_epoch = epoch;
            state.best_params = state.params.clone();
        }
        state.epoch = epoch;
        on_epoch(&metrics);
        state.history.push(metrics);
    }
    Ok(state)
}
