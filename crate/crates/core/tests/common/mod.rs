#![allow(dead_code)]

pub mod suites;

use flowpf::autodiff::Tensor;
use flowpf::filtering::{Episode, FlowModel, ModelConfig};
use flowpf::nn::{Normalizer, ParameterStore};
use flowpf::rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// A frame model small enough for finite differences: 4×4 RGB frames.
pub fn tiny_model(flows: bool, seed: u64) -> (FlowModel, ParameterStore) {
    let mut cfg = ModelConfig::for_frames(4, 1.5);
    cfg.embed_dim = 3;
    cfg.obs_hidden = vec![5];
    cfg.state_hidden = vec![4];
    cfg.action_hidden = vec![4];
    cfg.flow_layers = 2;
    cfg.flow_hidden = vec![4];
    cfg.flows = flows;
    let model = FlowModel::new(cfg, Normalizer::identity(3)).unwrap();
    let mut store = ParameterStore::new();
    model.init(&mut store, &mut rng::stream(seed, &[rng::PARAMS])).unwrap();
    (model, store)
}

/// Add `N(0, scale²)` to every parameter, so zero-initialised flow layers
/// stop being the identity.
pub fn jitter(store: &mut ParameterStore, scale: f64, seed: u64) {
    let mut r = rng::stream(seed, &[0xfeed]);
    let names: Vec<String> = store.names().cloned().collect();
    for n in names {
        for x in store.get_mut(&n).unwrap().data_mut() {
            let e: f64 = StandardNormal.sample(&mut r);
            *x += scale * e;
        }
    }
}

/// Random episode for `tiny_model`: states inside a 4-pixel frame.
pub fn tiny_episode(steps: usize, seed: u64) -> Episode {
    let mut r = rng::stream(seed, &[0xe915]);
    let obs: Vec<f64> = (0..steps * 48).map(|_| r.gen_range(0.0..1.0)).collect();
    let actions: Vec<f64> = (0..steps * 2).map(|_| r.gen_range(-0.5..0.5)).collect();
    let truths: Vec<f64> = (0..steps * 2).map(|_| r.gen_range(0.0..4.0)).collect();
    Episode {
        observations: Tensor::matrix(steps, 48, obs).unwrap(),
        actions: Tensor::matrix(steps, 2, actions).unwrap(),
        truths: Some(Tensor::matrix(steps, 2, truths).unwrap()),
        initial_state: vec![2.0, 2.0],
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
