//! Checkpoints: model configuration, best and latest parameters, optimizer
//! state and metrics history in one container file.

use std::path::Path;

use super::train::{EpochMetrics, Method, TrainState};
use crate::autodiff::Tensor;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::filtering::FlowModel;
use crate::nn::{Adam, ParameterStore};

pub const CHECKPOINT_MAGIC: &str = "FLOWPF-CKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// `seed` is the training seed, kept so evaluations can be grouped by it.
pub fn checkpoint_container(model: &FlowModel, state: &TrainState, method: Method, seed: u64) -> Container {
    let mut c = Container::new();
    c.set_meta("method", method);
    c.set_meta("seed", seed);
    c.set_meta("epoch", state.epoch);
    c.set_meta("best_epoch", state.best_epoch);
    c.set_meta("best_val", format!("{:?}", state.best_val));
    model.export(&mut c);
    state.best_params.export("best/", &mut c);
    state.params.export("last/", &mut c);
    state.optimizer.export("adam/", &mut c);
    let rows: Vec<f64> = state.history.iter().flat_map(|m| m.to_row()).collect();
    c.insert("history", Tensor::new(vec![state.history.len(), 6], rows).expect("six columns"));
    c
}

pub fn save_checkpoint(path: &Path, model: &FlowModel, state: &TrainState, method: Method, seed: u64) -> Result<()> {
    checkpoint_container(model, state, method, seed).write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
}

pub struct Checkpoint {
    pub model: FlowModel,
    pub state: TrainState,
    pub method: Method,
    pub seed: u64,
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    checkpoint_from_container(&Container::read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?)
}

pub fn checkpoint_from_container(c: &Container) -> Result<Checkpoint> {
    let model = FlowModel::import(c)?;
    let params = ParameterStore::import(c, "last/");
    let best_params = ParameterStore::import(c, "best/");
    if params.is_empty() || best_params.len() != params.len() {
        return Err(Error::Format("checkpoint parameters are missing".into()));
    }
    let history_t = c.tensor("history")?;
    let history = if history_t.numel() == 0 {
        Vec::new()
    } else {
        (0..history_t.rows()).map(|r| EpochMetrics::from_row(history_t.row(r))).collect()
    };
    Ok(Checkpoint {
        model,
        method: c.meta_parse("method")?,
        seed: c.meta_parse("seed")?,
        state: TrainState {
            params,
            best_params,
            optimizer: Adam::import(c, "adam/")?,
            epoch: c.meta_parse("epoch")?,
            best_epoch: c.meta_parse("best_epoch")?,
            best_val: c.meta_parse("best_val")?,
            history,
        },
    })
}
