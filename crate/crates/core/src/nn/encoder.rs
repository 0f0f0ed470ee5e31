use rand::Rng;

use super::mlp::Mlp;
use super::params::{ParameterStore, Params};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Per-channel affine normalization of a flattened, channel-last input.
///
/// Feature `j` belongs to channel `j % channels`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(channels: usize) -> Self {
        Normalizer {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Statistics over rows of channel-last feature vectors.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, channels: usize) -> Self {
        let mut sum = vec![0.0; channels];
        let mut sq = vec![0.0; channels];
        let mut count = vec![0usize; channels];
        for row in rows {
            for (j, &x) in row.iter().enumerate() {
                let c = j % channels;
                sum[c] += x;
                sq[c] += x * x;
                count[c] += 1;
            }
        }
        let mut mean = vec![0.0; channels];
        let mut std = vec![1.0; channels];
        for c in 0..channels {
            if count[c] > 0 {
                let n = count[c] as f64;
                mean[c] = sum[c] / n;
                let var = (sq[c] / n - mean[c] * mean[c]).max(0.0);
                // A constant channel carries no information; leave it unscaled.
                std[c] = if var > 1e-12 { var.sqrt() } else { 1.0 };
            }
        }
        Normalizer { mean, std }
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        let c = self.channels();
        let mut out = x.clone();
        let cols = *x.shape().last().unwrap_or(&1);
        for (j, v) in out.data_mut().iter_mut().enumerate() {
            let ch = (j % cols) % c;
            *v = (*v - self.mean[ch]) / self.std[ch];
        }
        out
    }

    /// Differentiable normalization of `[n, k]` with `k == channels`.
    pub fn apply_var<'t>(&self, x: Var<'t>) -> Result<Var<'t>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.channels() {
            return Err(Error::shape("normalize", &shape, &[self.channels()]));
        }
        let tape = x.tape();
        let n = shape[0];
        let mean = tape.constant(Tensor::vector(self.mean.clone())).broadcast_rows(n)?;
        let inv = tape
            .constant(Tensor::vector(self.std.iter().map(|s| 1.0 / s).collect()))
            .broadcast_rows(n)?;
        x.sub(mean)?.mul(inv)
    }
}

/// Normalization followed by an [`Mlp`]; output is an embedding of fixed width.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub mlp: Mlp,
    pub norm: Normalizer,
}

impl Encoder {
    pub fn new(prefix: &str, widths: &[usize], norm: Normalizer) -> Result<Self> {
        let mlp = Mlp::new(prefix, widths)?;
        if mlp.input_width() % norm.channels() != 0 {
            return Err(Error::Config(format!(
                "encoder `{prefix}`: input width {} not a multiple of {} channels",
                mlp.input_width(),
                norm.channels()
            )));
        }
        Ok(Encoder { mlp, norm })
    }

    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R) -> Result<()> {
        self.mlp.init(store, rng, false)
    }

    pub fn embed_dim(&self) -> usize {
        self.mlp.output_width()
    }

    /// Encode constant rows `[n, in]` (e.g. flattened frames).
    pub fn encode<'t>(&self, tape: &'t Tape, params: &Params<'t>, x: &Tensor) -> Result<Var<'t>> {
        let normalized = tape.constant(self.norm.apply(x));
        self.mlp.forward(params, normalized)
    }

    /// Encode differentiable rows, e.g. particle states.
    pub fn encode_var<'t>(&self, params: &Params<'t>, x: Var<'t>) -> Result<Var<'t>> {
        self.mlp.forward(params, self.norm.apply_var(x)?)
    }
}
