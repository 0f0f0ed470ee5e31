use indexmap::IndexMap;

use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::container::Container;
use crate::error::{Error, Result};

/// Gradient of the loss per parameter name, in store order.
pub type GradMap = IndexMap<String, Tensor>;

/// Named trainable tensors with deterministic (insertion) iteration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    tensors: IndexMap<String, Tensor>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.tensors.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.tensors.insert(name.to_string(), value);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Record every parameter as a trainable leaf on `tape`.
    pub fn attach<'t>(&self, tape: &'t Tape) -> Params<'t> {
        Params {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.param(v.clone())))
                .collect(),
        }
    }

    /// Like [`attach`](Self::attach) but as constants: used for evaluation
    /// passes that never call backward.
    pub fn attach_frozen<'t>(&self, tape: &'t Tape) -> Params<'t> {
        Params {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
                .collect(),
        }
    }

    pub fn export(&self, prefix: &str, into: &mut Container) {
        for (k, v) in &self.tensors {
            into.insert(format!("{prefix}{k}"), v.clone());
        }
    }

    pub fn import(from: &Container, prefix: &str) -> Self {
        let tensors = from
            .tensors
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|n| (n.to_string(), v.clone())))
            .collect();
        ParameterStore { tensors }
    }
}

/// Parameters recorded on a tape for one forward pass.
pub struct Params<'t> {
    vars: IndexMap<String, Var<'t>>,
}

impl<'t> Params<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn gradients(&self, grads: &Gradients) -> GradMap {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), grads.wrt(*v)))
            .collect()
    }
}
