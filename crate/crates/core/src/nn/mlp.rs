use rand::Rng;

use super::params::{ParameterStore, Params};
use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};

/// Fully connected network with tanh hidden layers and a linear output.
///
/// Parameters live in a [`ParameterStore`] under `{prefix}.w{i}` (`[in, out]`)
/// and `{prefix}.b{i}` (`[out]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    prefix: String,
    widths: Vec<usize>,
}

impl Mlp {
    pub fn new(prefix: &str, widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!("mlp `{prefix}`: bad layer widths {widths:?}")));
        }
        Ok(Mlp {
            prefix: prefix.to_string(),
            widths: widths.to_vec(),
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.w{layer}", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.b{layer}", self.prefix)
    }

    /// Uniform(±1/√fan_in) for every weight and bias. With `zero_last` the
    /// output layer starts at exactly zero.
    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R, zero_last: bool) -> Result<()> {
        for l in 0..self.layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let last = l + 1 == self.layers();
            let mut draw = |n: usize| -> Vec<f64> {
                if last && zero_last {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
                }
            };
            let w = draw(fan_in * fan_out);
            let b = draw(fan_out);
            store.insert(&self.weight_name(l), Tensor::matrix(fan_in, fan_out, w)?)?;
            store.insert(&self.bias_name(l), Tensor::vector(b))?;
        }
        Ok(())
    }

    /// `x` is `[n, in]`; returns `[n, out]`.
    pub fn forward<'t>(&self, params: &Params<'t>, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.input_width() {
            return Err(Error::shape("mlp_forward", &shape, &[self.input_width()]));
        }
        let n = shape[0];
        let mut h = x;
        for l in 0..self.layers() {
            let w = params.get(&self.weight_name(l))?;
            let b = params.get(&self.bias_name(l))?;
            h = h.matmul(w)?.add(b.broadcast_rows(n)?)?;
            if l + 1 < self.layers() {
                h = h.tanh();
            }
        }
        Ok(h)
    }
}
