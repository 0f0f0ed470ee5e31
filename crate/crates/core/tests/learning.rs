mod common;

use common::suites::{identity_flow_pseudo_likelihood_error, mean_train_loss, pseudo_likelihood_agreement};
use flowpf::container::Container;
use flowpf::diskworld::{Dataset, EnvConfig};
use flowpf::filtering::{FlowModel, ModelConfig};
use flowpf::learning::{
    checkpoint_container, checkpoint_from_container, train, Method, TrainConfig, TrainState, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
use flowpf::nn::ParameterStore;
use flowpf::{rng, Error};

fn toy(seed: u64, method: Method) -> (Dataset, FlowModel, ParameterStore, TrainConfig) {
    let ds = Dataset::generate(&EnvConfig::scaled(16, 2, 10), 100 + seed, 10, 2, 0).unwrap();
    let mut cfg = TrainConfig {
        n_particles: 16,
        batch_size: 5,
        epochs: 5,
        seed,
        ..TrainConfig::default()
    };
    method.configure(&mut cfg);
    let mut mc = ModelConfig::for_frames(16, 20f64.sqrt());
    mc.flows = cfg.flows;
    mc.obs_hidden = vec![32];
    mc.embed_dim = 16;
    let model = FlowModel::new(mc, ds.observation_normalizer()).unwrap();
    let mut store = ParameterStore::new();
    model.init(&mut store, &mut rng::stream(seed, &[rng::PARAMS])).unwrap();
    (ds, model, store, cfg)
}

/// Loss at fixed filter randomness before and after each of five epochs.
fn loss_curve(seed: u64, method: Method) -> Vec<f64> {
    let (ds, model, store, cfg) = toy(seed, method);
    let train_set = ds.episodes("train").unwrap();
    let val_set = ds.episodes("val").unwrap();
    let mut curve = vec![mean_train_loss(&model, &store, &train_set, &cfg)];
    let mut state = TrainState::fresh(store, cfg.lr);
    for e in 1..=cfg.epochs {
        let c = TrainConfig { epochs: e, ..cfg.clone() };
        state = train(&model, state, &train_set, &val_set, &c, |_| {}).unwrap();
        curve.push(mean_train_loss(&model, &state.params, &train_set, &cfg));
    }
    curve
}

#[test]
fn toy_training_decreases_loss() {
    for method in [Method::Dpf, Method::CnfSdpf] {
        for seed in 0..3 {
            let curve = loss_curve(seed, method);
            let drops = curve.windows(2).filter(|w| w[1] < w[0]).count();
            assert!(drops >= 4, "{method} seed {seed}: {curve:?}");
        }
    }
}

#[test]
fn zero_epochs_return_initial_parameters() {
    let (ds, model, store, cfg) = toy(0, Method::CnfDpf);
    let c = TrainConfig { epochs: 0, ..cfg };
    let state = train(&model, TrainState::fresh(store.clone(), c.lr), &ds.episodes("train").unwrap(), &[], &c, |_| {})
        .unwrap();
    assert_eq!(state.params, store);
    assert!(state.history.is_empty());
}

#[test]
fn supervised_flowless_semi_config_is_plain_dpf() {
    let run = |method: Method| {
        let (ds, model, store, mut cfg) = toy(1, method);
        cfg.lambda2 = 0.0;
        cfg.epochs = 2;
        let state = train(
            &model,
            TrainState::fresh(store, cfg.lr),
            &ds.episodes("train").unwrap(),
            &ds.episodes("val").unwrap(),
            &cfg,
            |_| {},
        )
        .unwrap();
        (state.history, state.params)
    };
    assert_eq!(run(Method::Sdpf), run(Method::Dpf));
}

#[test]
fn resumed_training_retraces_uninterrupted_run() {
    let (ds, model, store, cfg) = toy(2, Method::CnfSdpf);
    let train_set = ds.episodes("train").unwrap();
    let val_set = ds.episodes("val").unwrap();
    let full = train(&model, TrainState::fresh(store.clone(), cfg.lr), &train_set, &val_set, &TrainConfig { epochs: 4, ..cfg.clone() }, |_| {}).unwrap();

    let half = train(&model, TrainState::fresh(store, cfg.lr), &train_set, &val_set, &TrainConfig { epochs: 2, ..cfg.clone() }, |_| {}).unwrap();
    let bytes = checkpoint_container(&model, &half, Method::CnfSdpf, cfg.seed).encode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    let ck = checkpoint_from_container(&Container::decode(&bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION).unwrap()).unwrap();
    let resumed = train(&ck.model, ck.state, &train_set, &val_set, &TrainConfig { epochs: 4, ..cfg }, |_| {}).unwrap();
    assert_eq!(resumed, full);
}

#[test]
fn semi_supervised_requires_dividing_block_length() {
    let (ds, model, store, mut cfg) = toy(0, Method::CnfSdpf);
    cfg.block_len = 3;
    let err = train(&model, TrainState::fresh(store, cfg.lr), &ds.episodes("train").unwrap(), &[], &cfg, |_| {})
        .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn pseudo_likelihood_log_space_matches_direct_product() {
    let err = pseudo_likelihood_agreement();
    assert!(err <= 1e-10, "{err:e}");
}

#[test]
fn identity_flow_pseudo_likelihood_matches_hand_composition() {
    let err = identity_flow_pseudo_likelihood_error();
    assert!(err <= 1e-9, "{err:e}");
}
