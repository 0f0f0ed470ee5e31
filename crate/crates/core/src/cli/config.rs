//! Flat `key = value` run configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;

use crate::diskworld::EnvConfig;
use crate::error::{Error, Result};
use crate::filtering::ModelConfig;
use crate::learning::{Method, TrainConfig};
use crate::nn::Normalizer;

/// Every key the config file accepts.
pub const KEYS: &[&str] = &[
    // environment and splits
    "image_size",
    "n_distractors",
    "target_radius",
    "sigma_action",
    "sigma_dyn",
    "steps",
    "n_train",
    "n_val",
    "n_test",
    // training
    "method",
    "seed",
    "epochs",
    "lr",
    "lambda1",
    "lambda2",
    "block_len",
    "beta",
    "n_particles",
    "n_thres",
    "batch_size",
    "init_sigma",
    // model
    "embed_dim",
    "obs_hidden",
    "state_hidden",
    "action_hidden",
    "flow_layers",
    "flow_hidden",
    "model_sigma",
    "eps_d",
    // paths
    "dataset",
    "checkpoint",
    "metrics",
    "report",
];

/// Raw key/value pairs in file order, later assignments winning.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues(pub IndexMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = IndexMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{raw}`", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let kv = KeyValues(map);
        kv.check_keys()?;
        Ok(kv)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config `{}`: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_keys(&self) -> Result<()> {
        match self.0.keys().find(|k| !KEYS.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown config key `{k}`"))),
            None => Ok(()),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        self.0.insert(key.to_string(), value.to_string());
        self.check_keys()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.0
            .get(key)
            .map(|raw| {
                raw.parse()
                    .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
            })
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.0
            .get(key)
            .map(|raw| {
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`"))))
                    .collect()
            })
            .transpose()
    }
}

/// Everything a command may need, resolved from file keys and defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub method: Method,
    pub train: TrainConfig,
    pub embed_dim: usize,
    pub obs_hidden: Vec<usize>,
    pub state_hidden: Vec<usize>,
    pub action_hidden: Vec<usize>,
    pub flow_layers: usize,
    pub flow_hidden: Vec<usize>,
    /// Prototype dynamic noise; defaults to the generator's combined noise.
    pub model_sigma: f64,
    pub eps_d: f64,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut env = EnvConfig::scaled(
            kv.get("image_size")?.unwrap_or(32),
            kv.get("n_distractors")?.unwrap_or(10),
            kv.get("steps")?.unwrap_or(20),
        );
        if let Some(r) = kv.get("target_radius")? {
            env.target_radius = r;
        }
        if let Some(s) = kv.get("sigma_action")? {
            env.sigma_action = s;
        }
        if let Some(s) = kv.get("sigma_dyn")? {
            env.sigma_dyn = s;
        }
        env.validate()?;

        let method: Method = kv.get::<String>("method")?.map_or(Ok(Method::CnfSdpf), |m| m.parse())?;
        let d = TrainConfig::default();
        let mut train = TrainConfig {
            lambda1: kv.get("lambda1")?.unwrap_or(d.lambda1),
            lambda2: kv.get("lambda2")?.unwrap_or(d.lambda2),
            lr: kv.get("lr")?.unwrap_or(d.lr),
            block_len: kv.get("block_len")?.unwrap_or(d.block_len),
            beta: kv.get("beta")?.unwrap_or(d.beta),
            n_particles: kv.get("n_particles")?.unwrap_or(d.n_particles),
            n_thres: kv.get("n_thres")?,
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            epochs: kv.get("epochs")?.unwrap_or(d.epochs),
            seed: kv.get("seed")?.unwrap_or(d.seed),
            flows: d.flows,
            init_sigma: kv.get("init_sigma")?.unwrap_or(d.init_sigma),
        };
        method.configure(&mut train);
        train.validate()?;

        let default_sigma = (env.sigma_action.powi(2) + env.sigma_dyn.powi(2)).sqrt();
        let model_sigma = kv.get("model_sigma")?.unwrap_or(default_sigma);
        if !(model_sigma > 0.0) {
            return Err(Error::Config("model_sigma must be positive".into()));
        }
        let defaults = ModelConfig::for_frames(env.image_size, model_sigma);
        let cfg = RunConfig {
            n_train: kv.get("n_train")?.unwrap_or(100),
            n_val: kv.get("n_val")?.unwrap_or(20),
            n_test: kv.get("n_test")?.unwrap_or(20),
            method,
            train,
            embed_dim: kv.get("embed_dim")?.unwrap_or(defaults.embed_dim),
            obs_hidden: kv.list("obs_hidden")?.unwrap_or(defaults.obs_hidden),
            state_hidden: kv.list("state_hidden")?.unwrap_or(defaults.state_hidden),
            action_hidden: kv.list("action_hidden")?.unwrap_or(defaults.action_hidden),
            flow_layers: kv.get("flow_layers")?.unwrap_or(defaults.flow_layers),
            flow_hidden: kv.list("flow_hidden")?.unwrap_or(defaults.flow_hidden),
            model_sigma,
            eps_d: kv.get("eps_d")?.unwrap_or(defaults.eps_d),
            dataset: kv.get("dataset")?,
            checkpoint: kv.get("checkpoint")?,
            metrics: kv.get("metrics")?,
            report: kv.get("report")?,
            env,
        };
        cfg.model_config(cfg.train.flows).validate()?;
        Ok(cfg)
    }

    pub fn model_config(&self, flows: bool) -> ModelConfig {
        let mut m = ModelConfig::for_frames(self.env.image_size, self.model_sigma);
        m.embed_dim = self.embed_dim;
        m.obs_hidden = self.obs_hidden.clone();
        m.state_hidden = self.state_hidden.clone();
        m.action_hidden = self.action_hidden.clone();
        m.flow_layers = self.flow_layers;
        m.flow_hidden = self.flow_hidden.clone();
        m.eps_d = self.eps_d;
        m.flows = flows;
        m
    }

    pub fn build_model(&self, obs_norm: Normalizer) -> Result<crate::filtering::FlowModel> {
        crate::filtering::FlowModel::new(self.model_config(self.train.flows), obs_norm)
    }
}
