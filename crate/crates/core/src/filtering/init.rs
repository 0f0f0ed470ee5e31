use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{Tensor, Var};
use crate::error::{Error, Result};
use crate::gaussian;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitKind {
    /// Uniform over the box `[0, extent)^d`.
    Uniform { extent: f64 },
    /// `N(center, σ² I)` around the supplied center (the true initial state).
    Gaussian,
}

/// Distribution of the particles at `t = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialDistribution {
    pub kind: InitKind,
    pub sigma: f64,
}

impl InitialDistribution {
    pub fn gaussian(sigma: f64) -> Self {
        InitialDistribution {
            kind: InitKind::Gaussian,
            sigma,
        }
    }

    pub fn uniform(extent: f64) -> Self {
        InitialDistribution {
            kind: InitKind::Uniform { extent },
            sigma: 1.0,
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, center: &[f64], rng: &mut R) -> Result<Tensor> {
        if n == 0 {
            return Err(Error::Config("need at least one particle".into()));
        }
        let d = center.len();
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            for &c in center {
                let x = match self.kind {
                    InitKind::Gaussian => {
                        let e: f64 = StandardNormal.sample(rng);
                        c + self.sigma * e
                    }
                    InitKind::Uniform { extent } => rng.gen_range(0.0..extent),
                };
                data.push(x);
            }
        }
        Tensor::matrix(n, d, data)
    }

    /// Per-particle `log π(s)`.
    pub fn log_density<'t>(&self, states: Var<'t>, center: &[f64]) -> Result<Var<'t>> {
        let shape = states.shape();
        let (n, d) = (shape[0], shape[1]);
        let tape = states.tape();
        match self.kind {
            InitKind::Gaussian => {
                let mean = tape.constant(Tensor::vector(center.to_vec())).broadcast_rows(n)?;
                gaussian::log_density(states, mean, &vec![self.sigma; d])
            }
            InitKind::Uniform { extent } => {
                let inside = states.value().data().iter().all(|&x| (0.0..extent).contains(&x));
                if !inside {
                    return Err(Error::Numerical("particle outside the uniform initial support".into()));
                }
                Ok(tape.constant(Tensor::full(&[n], -(d as f64) * extent.ln())))
            }
        }
    }
}
